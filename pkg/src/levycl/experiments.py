"""Convergence-rate experiments.

The stochastic study compares each resolution with a finer coupled
reference driven by the same noise path; deterministic baselines compare
against exact solutions.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .ensemble import mean_and_se, run_paths, tree_mean
from .errors import BlowUpError, FitError, InvalidParameterError
from .flux import make_flux
from .grid import Grid1D, LatticeState, l1_distance, project_initial, restrict
from .noise import LevyMeasureSpec, make_generator, sample_path
from .scenarios import Scenario, exact_solution
from .solver import SchemeConfig, coupled_micro_step, coupled_solve, solve_path

__all__ = [
    "RateStudy",
    "fit_rate",
    "run_rate_study",
    "deterministic_baseline",
    "exact_l1_error",
    "projection_error",
]

_GL = np.polynomial.legendre.leggauss(8)


@dataclass
class RateStudy:
    resolutions: list
    dxs: np.ndarray
    n_paths: int
    reference_factor: Optional[int]
    per_path_errors: np.ndarray  # (n_paths, n_resolutions)
    mean_error: np.ndarray
    std_error: np.ndarray
    fitted_rate: float
    intercept: float
    rate_ci: tuple
    seeds: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.mean_error) < 0))

    def to_dict(self) -> dict:
        return {
            "resolutions": list(self.resolutions),
            "dx": self.dxs.tolist(),
            "n_paths": self.n_paths,
            "reference_factor": self.reference_factor,
            "mean_error": self.mean_error.tolist(),
            "std_error": self.std_error.tolist(),
            "fitted_rate": self.fitted_rate,
            "intercept": self.intercept,
            "rate_ci": list(self.rate_ci),
            "monotone": self.monotone,
            "seeds": list(self.seeds),
            "per_path_errors": self.per_path_errors.tolist(),
            "metadata": self.metadata,
        }

    def table_csv(self) -> str:
        buf = io.StringIO()
        buf.write("dx,mean_error,std_error\n")
        for dx, m, s in zip(self.dxs, self.mean_error, self.std_error):
            buf.write(f"{dx:.17g},{m:.17g},{s:.17g}\n")
        return buf.getvalue()


def fit_rate(dxs, errors, weights=None) -> tuple:
    """Weighted least squares of ``log(error)`` on ``log(dx)``.

    Returns ``(rate, intercept, (lo, hi))`` where the interval is the 95%
    t-interval of the slope (NaN when there are no residual degrees of freedom).
    """
    x = np.asarray(dxs, dtype=np.float64)
    y = np.asarray(errors, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise FitError("need matching arrays with at least two points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidParameterError("rate fit needs strictly positive dx and errors")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64)
    lx, ly = np.log(x), np.log(y)
    sw = np.sqrt(w)
    A = np.column_stack([lx, np.ones_like(lx)]) * sw[:, None]
    coef, *_ = np.linalg.lstsq(A, ly * sw, rcond=None)
    rate, icpt = float(coef[0]), float(coef[1])
    dof = x.size - 2
    if dof <= 0:
        return rate, icpt, (math.nan, math.nan)
    resid = ly * sw - A @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    half = stats.t.ppf(0.975, dof) * math.sqrt(cov[0, 0])
    return rate, icpt, (float(rate - half), float(rate + half))


def _log_weights(mean, se):
    if np.all(se > 0):
        return (mean / se) ** 2
    return None


def _bootstrap_ci(per_path, dxs, n_boot, seed) -> tuple:
    rng = make_generator(seed, 2)
    n = per_path.shape[0]
    rates = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, size=n)
        sample = per_path[idx]
        m, se = mean_and_se(sample)
        rates[b] = fit_rate(dxs, m, _log_weights(m, se))[0]
    lo, hi = np.quantile(rates, [0.025, 0.975])
    return float(lo), float(hi)


def projection_error(u0, grid: Grid1D, subdivisions: int = 32) -> float:
    """``|| u_dx(0) - u0 ||_L1`` on the grid's domain."""
    state = project_initial(u0, grid)
    return _l1_against(state, lambda x: u0(x), getattr(u0, "breakpoints", lambda: ())(),
                       subdivisions)


def _l1_against(state: LatticeState, func, breakpoints, subdivisions: int) -> float:
    g = state.grid
    n = g.n_cells * subdivisions
    edges = g.x_min + np.arange(n + 1) * (g.length / n)
    cuts = np.unique(np.concatenate([edges, [b for b in breakpoints if g.x_min < b < g.x_max]]))
    a, b = cuts[:-1], cuts[1:]
    nodes, weights = _GL
    x = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * nodes
    cell = np.minimum(((0.5 * (a + b) - g.x_min) / g.dx).astype(np.int64), g.n_cells - 1)
    diff = np.abs(state.values[cell][:, None] - func(x))
    return float(np.sum(0.5 * (b - a) * (diff @ weights)))


def exact_l1_error(state: LatticeState, solution, t: float, subdivisions: int = 8) -> float:
    """``int |u_dx(t, x) - u(t, x)| dx`` over the grid's domain."""
    return _l1_against(state, lambda x: solution(t, x), solution.breakpoints(t), subdivisions)


def _study_task(task):
    scenario, resolutions, n_ref, seed = task
    cfg = replace(scenario.config, record_times=(scenario.config.T,))
    grids = [scenario.grid(n) for n in resolutions] + [scenario.grid(n_ref)]
    dtm = coupled_micro_step(cfg, grids)
    path = sample_path(cfg.levy, cfg.T, dtm, seed)
    try:
        trajs = coupled_solve(cfg, grids, scenario.u0, path, log=False)
    except BlowUpError as exc:
        exc.seed = seed
        raise
    ref = trajs[-1].final
    return np.array([l1_distance(restrict(ref, n_ref // n), tr.final)
                     for n, tr in zip(resolutions, trajs[:-1])])


def run_rate_study(scenario: Scenario, resolutions: Sequence[int], n_paths: int,
                   reference_factor: int = 4, seed_base: int = 0, threads: int = 1,
                   n_boot: int = 1000, seeds: Optional[Sequence[int]] = None) -> RateStudy:
    """Coupled multi-resolution Monte Carlo estimate of the E[L1] rate."""
    res = sorted(int(n) for n in resolutions)
    if len(res) < 2 or len(set(res)) != len(res):
        raise InvalidParameterError("need at least two distinct resolutions")
    if reference_factor < 4:
        raise InvalidParameterError("reference_factor must be >= 4")
    n_ref = reference_factor * res[-1]
    finest = scenario.grid(res[-1])
    init_err = projection_error(scenario.u0, finest)
    if init_err > finest.dx:
        raise InvalidParameterError(
            f"initial projection error {init_err:.3g} exceeds finest dx {finest.dx:.3g}")
    seeds = list(range(seed_base, seed_base + n_paths)) if seeds is None else list(seeds)
    per_path = np.array(run_paths(_study_task, [(scenario, res, n_ref, s) for s in seeds],
                                  threads))
    return _assemble(per_path, res, scenario, reference_factor, seeds, n_boot,
                     {"initial_projection_error": init_err, "reference_cells": n_ref})


def _assemble(per_path, res, scenario, reference_factor, seeds, n_boot, meta) -> RateStudy:
    dxs = np.array([scenario.grid(n).dx for n in res])
    if per_path.shape[0] >= 2:
        mean, se = mean_and_se(per_path)
    else:
        mean, se = per_path[0], np.zeros(per_path.shape[1])
    if np.any(mean <= 0):
        raise FitError("non-positive mean error; the study is degenerate")
    rate, icpt, ci = fit_rate(dxs, mean, _log_weights(mean, se))
    if per_path.shape[0] >= 2 and n_boot > 0:
        ci = _bootstrap_ci(per_path, dxs, n_boot, seeds[0] if seeds else 0)
    return RateStudy(list(res), dxs, per_path.shape[0], reference_factor, per_path,
                     mean, se, rate, icpt, ci, list(seeds), meta)


def deterministic_baseline(label: str, resolutions: Sequence[int], cfl: float = 0.5) -> RateStudy:
    """Noise-free rate study of a registered exact solution."""
    case = exact_solution(label)
    flux = make_flux(case.flux_label, **case.flux_params)
    cfg = SchemeConfig(flux, case.T, cfl=cfl, record_times=(case.T,))
    errs = []
    for n in sorted(resolutions):
        g = Grid1D(case.x_min, case.x_max, n, case.boundary)
        dtm = case.T / math.ceil(case.T / cfg.dt_max(g) - 1e-12)
        path = sample_path(LevyMeasureSpec(), case.T, dtm, 0)
        tr = solve_path(cfg, g, project_initial(case.u0, g, subdivisions=4), path, log=False)
        errs.append(exact_l1_error(tr.final, case.solution, case.T))
    scen = Scenario(cfg, case.u0, case.x_min, case.x_max, case.boundary)
    return _assemble(np.array([errs]), sorted(resolutions), scen, None, [0], 0,
                     {"exact_solution": label})
