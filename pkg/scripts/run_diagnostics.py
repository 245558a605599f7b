#!/usr/bin/env python3
"""Run ``levycl diagnose`` and print a readable summary of diagnose.json."""

import argparse
import json
import os
import sys
from pathlib import Path

from levycl.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="YAML run configuration")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="out/diagnose")
    args = ap.parse_args()

    argv = ["diagnose", "--out", args.out, "--threads", str(args.threads)]
    if args.config:
        argv += ["--config", args.config]
    code = cli_main(argv)
    if code:
        sys.exit(code)
    rep = json.loads((Path(args.out) / "diagnose.json").read_text())

    print("\nmoments  sup_t E|u|_p^p   (coarse vs fine, +- SE)")
    for p, m in rep["moments"].items():
        (c, cs), (f, fs) = m["coarse"], m["fine"]
        print(f"  p={p}: {c:.5f} +- {cs:.1e}   {f:.5f} +- {fs:.1e}   ok={m['within_3se']}")
    bv = rep["bv"]
    print(f"BV  E|u(0)|={bv['mean'][0]:.4f}  E|u(T)|={bv['mean'][-1]:.4f}  max ratio={max(bv['ratio']):.4f}")
    li = rep["linf"]
    print(f"Linf  max={li['max_observed']:.4f}  bound={li['bound']:.4f}  ok={li['ok']}")
    print("entropy residual violation rates")
    for r in rep["entropy"]:
        print(f"  xi={r['xi']:<5} k={r['k']:8.4f}  rate={r['violation_rate']:.4f}")
    tc = rep["time_continuity"]
    print(f"time continuity  C1={tc['C1']:.4f}  C2={tc['C2']:.4f}  residual={tc['fit_residual']:.4f}")


if __name__ == "__main__":
    main()
