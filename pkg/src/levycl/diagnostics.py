"""Ensemble statistics for the a priori estimates of the scheme.

All reductions run over paths in seed order with :func:`tree_mean`, so
results do not depend on how the paths were scheduled.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ensemble import mean_and_se
from .errors import FitError, InvalidParameterError
from .flux import NUMERICAL_FLUXES, EntropyPair, divergence_values, numerical_entropy_flux, pad_ghosts
from .grid import Grid1D, bv_values
from .solver import SchemeConfig, Trajectory

__all__ = [
    "EnsembleStats",
    "EntropyResidualReport",
    "ensemble_stats",
    "moment_supremum",
    "bv_expectation_curve",
    "entropy_residual",
    "kruzkov_levels",
    "time_continuity_fit",
    "stack_values",
]


def stack_values(trajectories: Sequence[Trajectory]) -> tuple:
    """``(values[path, time, cell], times, grid)`` for a common record mesh."""
    if len(trajectories) < 2:
        raise InvalidParameterError("an ensemble needs at least two paths")
    times = trajectories[0].times
    grid = trajectories[0].snapshots[0].grid
    for tr in trajectories[1:]:
        if not np.array_equal(tr.times, times) or tr.snapshots[0].grid != grid:
            raise InvalidParameterError("trajectories are not recorded on a common mesh")
    return np.stack([tr.values() for tr in trajectories]), times, grid


@dataclass
class EnsembleStats:
    n_paths: int
    times: np.ndarray
    stats: dict
    metadata: dict = field(default_factory=dict)

    def mean(self, name):
        return self.stats[name][0]

    def se(self, name):
        return self.stats[name][1]

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "times": self.times.tolist(),
            "stats": {k: {"mean": m.tolist(), "std_error": s.tolist()}
                      for k, (m, s) in self.stats.items()},
            "metadata": self.metadata,
        }


def _functionals(values: np.ndarray, grid: Grid1D) -> dict:
    dx = grid.dx
    a = np.abs(values)
    return {
        "mass": dx * values.sum(axis=-1),
        "l1": dx * a.sum(axis=-1),
        "l2sq": dx * (a * a).sum(axis=-1),
        "l4": dx * (a ** 4).sum(axis=-1),
        "linf": a.max(axis=-1),
        "bv": bv_values(values, grid.boundary),
    }


def ensemble_stats(trajectories: Sequence[Trajectory], metadata: Optional[dict] = None) -> EnsembleStats:
    vals, times, grid = stack_values(trajectories)
    stats = {k: mean_and_se(v) for k, v in _functionals(vals, grid).items()}
    meta = dict(metadata or {})
    meta.setdefault("seeds", [tr.seed for tr in trajectories])
    return EnsembleStats(len(trajectories), times, stats, meta)


def moment_supremum(trajectories: Sequence[Trajectory], p: int) -> tuple:
    """``max_t E||u(t)||_p^p`` as ``(value, std_error, time)``."""
    if p < 1:
        raise InvalidParameterError("p must be >= 1")
    vals, times, grid = stack_values(trajectories)
    per_path = grid.dx * (np.abs(vals) ** p).sum(axis=-1)
    m, se = mean_and_se(per_path)
    i = int(np.argmax(m))
    return float(m[i]), float(se[i]), float(times[i])


def bv_expectation_curve(trajectories: Sequence[Trajectory]) -> dict:
    vals, times, grid = stack_values(trajectories)
    m, se = mean_and_se(bv_values(vals, grid.boundary))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = m / m[0] if m[0] > 0 else np.where(m == 0, 1.0, np.inf)
    return {"times": times, "mean": m, "std_error": se, "ratio": ratio}


@dataclass
class EntropyResidualReport:
    xi: float
    k: float
    n_paths: int
    quantiles: dict
    violation_rate: float
    n_tests: int
    tolerance_sigmas: float
    mean_residual: np.ndarray = field(repr=False)
    std_error: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("mean_residual")
        d.pop("std_error")
        return d


def _ito_correction(config: SchemeConfig, pair: EntropyPair, k: float,
                    u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Expected entropy production of the noise over one unit of time.

    Coefficients use the start-of-step state ``u``; the entropy is expanded
    around the transported state ``v`` to which the noise is added.
    """
    out = np.zeros_like(u)
    if config.sigma is not None:
        s = config.sigma.sigma(u)
        out += 0.5 * s * s * pair.beta_doubleprime(v - k)
    if config.has_jumps:
        z, w = config.levy.quadrature_rule()
        eta = config.eta.eta(u[..., None], z)
        vk = (v - k)[..., None]
        gap = pair.beta(vk + eta) - pair.beta(vk) - pair.beta_prime(vk) * eta
        out += gap @ w
    return out


def entropy_residual(trajectories: Sequence[Trajectory], config: SchemeConfig,
                     pair: EntropyPair, k: float, tolerance_sigmas: float = 3.0,
                     atol: float = 1e-12) -> EntropyResidualReport:
    """Integrated cell entropy inequality over every recorded step.

    For each path, cell ``j`` and step ``n`` the residual is

        beta(u^{n+1}_j - k) - beta(u^n_j - k)
          + dt/dx (G_{j+1/2} - G_{j-1/2}) - dt * (Ito corrections)

    with ``G`` the numerical entropy flux of the scheme. Its expectation is
    non-positive; a (cell, step) pair counts as a violation when the
    ensemble mean exceeds ``tolerance_sigmas`` standard errors (plus ``atol``).
    """
    vals, times, grid = stack_values(trajectories)
    dt = trajectories[0].dt
    if len(times) < 2 or not np.allclose(np.diff(times), dt, rtol=1e-9, atol=1e-12):
        raise InvalidParameterError("entropy residual needs snapshots at every step")
    nf = NUMERICAL_FLUXES[config.numerical_flux]
    u, u_next = vals[:, :-1, :], vals[:, 1:, :]
    div = divergence_values(config.flux, u, grid.dx, grid.boundary, nf)
    v = u - dt * div
    w = pad_ghosts(u, grid.boundary)
    G = numerical_entropy_flux(config.flux, pair, k, w[..., :-1], w[..., 1:], nf)
    res = (pair.beta(u_next - k) - pair.beta(u - k)
           + dt / grid.dx * np.diff(G, axis=-1)
           - dt * _ito_correction(config, pair, k, u, v))
    m, se = mean_and_se(res)
    viol = m > tolerance_sigmas * se + atol
    qs = (0.0, 0.01, 0.5, 0.99, 1.0)
    return EntropyResidualReport(
        xi=pair.xi, k=float(k), n_paths=vals.shape[0],
        quantiles={str(q): float(np.quantile(m, q)) for q in qs},
        violation_rate=float(viol.mean()), n_tests=int(viol.size),
        tolerance_sigmas=tolerance_sigmas, mean_residual=m, std_error=se)


def kruzkov_levels(trajectories: Sequence[Trajectory], n: int = 5) -> list:
    """Evenly spaced quantiles of the ensemble values on the solution support.

    ``n = 1`` returns the median. Cells that are exactly zero are excluded so
    that compactly supported data do not collapse every level onto 0.
    """
    vals, _, _ = stack_values(trajectories)
    support = vals[vals != 0.0]
    pool = support if support.size else vals.ravel()
    qs = [0.5] if n == 1 else np.linspace(0.1, 0.9, n)
    return [float(np.quantile(pool, q)) for q in qs]


def time_continuity_fit(trajectories: Sequence[Trajectory], K: tuple) -> tuple:
    """Fit ``E int_K |u(t) - u(s)| ~ C1 |t-s| + C2 sqrt|t-s|`` over record pairs.

    Returns ``(C1, C2, relative_residual)``.
    """
    vals, times, grid = stack_values(trajectories)
    if len(times) < 8:
        raise InvalidParameterError("time continuity fit needs at least 8 record times")
    x = grid.centers
    mask = (x >= K[0]) & (x <= K[1])
    sub = vals[:, :, mask]
    i, j = np.triu_indices(len(times), k=1)
    gaps = times[j] - times[i]
    diffs = grid.dx * np.abs(sub[:, j, :] - sub[:, i, :]).sum(axis=-1)
    y, _ = mean_and_se(diffs)
    A = np.column_stack([gaps, np.sqrt(gaps)])
    if np.linalg.matrix_rank(A) < 2:
        raise FitError("degenerate design matrix for the time-continuity fit")
    ynorm = np.linalg.norm(y)
    if ynorm == 0:
        return 0.0, 0.0, 0.0
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rel = float(np.linalg.norm(A @ coef - y) / ynorm)
    return float(coef[0]), float(coef[1]), rel


def report_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)
