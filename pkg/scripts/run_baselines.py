#!/usr/bin/env python3
"""Noise-free convergence rates against exact solutions.

Prints one row per registered exact solution and writes ``baselines.json``.
"""

import argparse
import json
import time
from pathlib import Path

from levycl.experiments import deterministic_baseline

CASES = {
    "square_wave": (0.45, 0.75),
    "smooth_translation": (0.75, 1.1),
    "burgers_shock": (0.8, None),
    "burgers_rarefaction": (0.7, None),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolutions", type=int, nargs="+", default=[128, 256, 512, 1024, 2048])
    ap.add_argument("--cfl", type=float, default=0.5)
    ap.add_argument("--out", default="out/baselines")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = {}
    t0 = time.time()
    print(f"{'case':<22}{'rate':>8}  {'target':<14}errors")
    for label, (lo, hi) in CASES.items():
        study = deterministic_baseline(label, args.resolutions, cfl=args.cfl)
        ok = study.fitted_rate >= lo and (hi is None or study.fitted_rate <= hi)
        target = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
        errs = " ".join(f"{e:.3e}" for e in study.mean_error)
        print(f"{label:<22}{study.fitted_rate:8.4f}  {target:<14}{errs}{'' if ok else '  <-- out of range'}")
        rows[label] = {**study.to_dict(), "target": [lo, hi], "ok": ok}
    print(f"total {time.time() - t0:.1f}s")
    (out / "baselines.json").write_text(json.dumps(rows, indent=2, default=str))


if __name__ == "__main__":
    main()
