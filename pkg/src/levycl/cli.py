"""Command line entry point: ``levycl {solve,converge,diagnose,selftest}``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .config import RunConfig, build_scenario, dump_config, load_config
from .diagnostics import (bv_expectation_curve, ensemble_stats, entropy_residual,
                          kruzkov_levels, moment_supremum, report_json, time_continuity_fit)
from .ensemble import run_paths, single_grid_micro_step, solve_seed, stable_hash
from .errors import BlowUpError, ConfigError, LevyclError
from .experiments import fit_rate, run_rate_study
from .flux import make_entropy_pair
from .grid import project_initial, to_csv
from .noise import sample_path, write_path
from .solver import linf_bound, solve_path

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_IO = 0, 2, 3, 4


def _header(rc: RunConfig) -> dict:
    return {"config_hash": stable_hash(rc.to_dict()), "version": __version__}


def _comment(rc: RunConfig) -> str:
    h = _header(rc)
    return f"levycl {h['version']} config_hash={h['config_hash']}"


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_meta(out, rc, command, started):
    meta = {**_header(rc), "command": command,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
            "elapsed_s": round(time.time() - started, 3)}
    _write(os.path.join(out, f"{command}.meta.json"), json.dumps(meta, indent=2))


def cmd_solve(rc: RunConfig, out: str, seed: int, threads: int) -> int:
    scen = build_scenario(rc)
    grid = scen.grid(rc.solver.n_cells)
    dtm = single_grid_micro_step(scen.config, grid)
    path = sample_path(scen.config.levy, scen.config.T, dtm, seed)
    traj = solve_path(scen.config, grid, project_initial(scen.u0, grid), path)
    com = _comment(rc)
    for i, snap in enumerate(traj.snapshots):
        _write(os.path.join(out, f"snapshot_{i:04d}.csv"), to_csv(snap, f"{com} t={snap.time:.17g}"))
    _write(os.path.join(out, "diagnostics.csv"), traj.diagnostics_csv(com))
    write_path(path, os.path.join(out, "noise_path.bin"))
    summary = {**_header(rc), "seed": seed, "dt": traj.dt, "n_cells": grid.n_cells,
               "record_times": traj.times.tolist(),
               "linf_bound": linf_bound(scen.config, traj.snapshots[0].values),
               "max_linf": float(np.max(traj.diagnostics["linf"])),
               "config": rc.to_dict()}
    _write(os.path.join(out, "solve.json"), report_json(summary))
    print(f"solved {grid.n_cells} cells to T={scen.config.T} in {len(traj.diagnostics['step']) - 1} steps")
    return EXIT_OK


def cmd_converge(rc: RunConfig, out: str, seed: int, threads: int) -> int:
    st = rc.study
    scen = build_scenario(rc)
    study = run_rate_study(scen, st.resolutions, st.n_paths, st.reference_factor, seed,
                           threads, st.n_boot)
    payload = {**_header(rc), "config": rc.to_dict(), "study": study.to_dict(),
               "thresholds": {"min_rate": 0.4, "max_ci_width": 0.2}}
    if "json" in rc.output.formats:
        _write(os.path.join(out, "rate_study.json"), report_json(payload))
    if "csv" in rc.output.formats:
        _write(os.path.join(out, "rate_study.csv"), f"# {_comment(rc)}\n" + study.table_csv())
    lo, hi = study.rate_ci
    print(f"rate {study.fitted_rate:.4f} 95% CI [{lo:.4f}, {hi:.4f}] monotone={study.monotone}")
    return EXIT_OK


def cmd_diagnose(rc: RunConfig, out: str, seed: int, threads: int) -> int:
    d = rc.diagnostics
    if d.n_paths < 2:
        raise ConfigError("diagnostics.n_paths", "needs >= 2 paths for standard errors")
    scen = build_scenario(rc, record_times=None)
    seeds = list(range(seed, seed + d.n_paths))

    def ensemble(n):
        g = scen.grid(n)
        return run_paths(solve_seed, [(scen.config, g, scen.u0, s) for s in seeds], threads)

    trajs = ensemble(d.n_cells)
    fine = ensemble(2 * d.n_cells)
    stats = ensemble_stats(trajs, {**_header(rc)})
    moments = {}
    for p in d.moment_ps:
        m1, s1, _ = moment_supremum(trajs, p)
        m2, s2, _ = moment_supremum(fine, p)
        joint = math.hypot(s1, s2)
        moments[str(p)] = {"coarse": [m1, s1], "fine": [m2, s2],
                           "within_3se": bool(abs(m1 - m2) <= 3 * joint + 1e-14)}
    bv = bv_expectation_curve(trajs)
    bound = linf_bound(scen.config, trajs[0].snapshots[0].values)
    linf_max = max(float(np.max(t.diagnostics["linf"])) for t in trajs)
    levels = kruzkov_levels(trajs, d.n_levels)
    entropy = []
    for xi in d.xis:
        for k in levels:
            rep = entropy_residual(trajs, scen.config, make_entropy_pair(xi), k,
                                   d.tolerance_sigmas)
            entropy.append(rep.to_dict())
    c1, c2, resid = time_continuity_fit(trajs, tuple(d.K))
    payload = {
        **_header(rc),
        "config": rc.to_dict(),
        "seeds": seeds,
        "thresholds": {"tolerance_sigmas": d.tolerance_sigmas,
                       "max_violation_rate": d.max_violation_rate,
                       "linf_slack": d.linf_slack, "max_fit_residual": d.max_fit_residual,
                       "blowup_factor": scen.config.blowup_factor},
        "ensemble": stats.to_dict(),
        "moments": moments,
        "bv": {"times": bv["times"], "mean": bv["mean"], "std_error": bv["std_error"],
               "ratio": bv["ratio"]},
        "linf": {"bound": bound, "max_observed": linf_max,
                 "ok": linf_max <= bound * (1 + d.linf_slack)},
        "entropy": entropy,
        "time_continuity": {"K": list(d.K), "C1": c1, "C2": c2, "fit_residual": resid},
    }
    _write(os.path.join(out, "diagnose.json"), report_json(payload))
    worst = max(r["violation_rate"] for r in entropy)
    print(f"entropy violation_rate max {worst:.4f}; time-continuity C1={c1:.4g} "
          f"C2={c2:.4g} residual={resid:.3f}; linf {linf_max:.4g} <= {bound:.4g}")
    return EXIT_OK


def cmd_selftest(rc: RunConfig, out: str, seed: int, threads: int) -> int:
    dxs = 2.0 ** -np.arange(4, 10)
    rate, _, _ = fit_rate(dxs, 0.7 * np.sqrt(dxs))
    print(f"rate {rate:.4f}")
    return EXIT_OK if abs(rate - 0.5) < 1e-12 else 1


COMMANDS = {"solve": cmd_solve, "converge": cmd_converge, "diagnose": cmd_diagnose,
            "selftest": cmd_selftest}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levycl", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="overrides study.seed_base")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        if name == "converge":
            p.add_argument("--selftest", action="store_true",
                           help="fit an exact sqrt(dx) power law and exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        rc = load_config(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    command = "selftest" if getattr(args, "selftest", False) else args.command
    seed = rc.study.seed_base if args.seed is None else args.seed
    out = args.out or rc.output.directory
    try:
        if command != "selftest":
            os.makedirs(out, exist_ok=True)
        code = COMMANDS[command](rc, out, seed, max(1, args.threads))
        if command != "selftest":
            _write(os.path.join(out, "config.yaml"), f"# {_comment(rc)}\n" + dump_config(rc))
            _write_meta(out, rc, command, started)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"numerical blow-up (seed={exc.seed}, step={exc.step}): {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LevyclError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
