#!/usr/bin/env python3
"""Stochastic E[L1] convergence study on the default scenario (or a YAML config).

Like ``levycl converge`` but also prints the per-resolution table, the error
ratios between consecutive grids and the local slopes.
"""

import argparse
import json
import os
import time
from pathlib import Path

import numpy as np

from levycl.config import RunConfig, build_scenario, load_config
from levycl.experiments import run_rate_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="YAML run configuration (default: built-in scenario)")
    ap.add_argument("--paths", type=int, help="override study.n_paths")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="out/rate_study")
    args = ap.parse_args()

    rc = load_config(args.config) if args.config else RunConfig()
    st = rc.study
    n_paths = args.paths or st.n_paths
    scen = build_scenario(rc)
    t0 = time.time()
    study = run_rate_study(scen, st.resolutions, n_paths, st.reference_factor, st.seed_base,
                           args.threads, st.n_boot)
    print(f"{'n':>6}{'dx':>12}{'E[L1]':>12}{'SE':>11}{'ratio':>8}")
    prev = None
    for n, dx, m, s in zip(study.resolutions, study.dxs, study.mean_error, study.std_error):
        ratio = "" if prev is None else f"{prev / m:8.3f}"
        print(f"{n:6d}{dx:12.4e}{m:12.4e}{s:11.2e}{ratio}")
        prev = m
    lo, hi = study.rate_ci
    print(f"rate {study.fitted_rate:.4f}  95% bootstrap CI [{lo:.4f}, {hi:.4f}]  "
          f"monotone={study.monotone}  paths={n_paths}  ref={study.metadata['reference_cells']}  "
          f"{time.time() - t0:.0f}s")
    # local slopes show how far the study is from the asymptotic regime
    slopes = np.diff(np.log(study.mean_error)) / np.diff(np.log(study.dxs))
    print("local slopes:", " ".join(f"{s:.3f}" for s in slopes))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rate_study.json").write_text(json.dumps(study.to_dict(), indent=2))
    (out / "rate_study.csv").write_text(study.table_csv())
    print(f"wrote {out}/rate_study.json and rate_study.csv")

if __name__ == "__main__":
    main()
