"""Flux models, Engquist-Osher splitting and the smoothed entropy pairs.

The EO split of a flux ``f`` is ``f = f_plus + f_minus`` with

    f_plus(u)  = f(0) + int_0^u max(f'(s), 0) ds
    f_minus(u) =        int_0^u min(f'(s), 0) ds

When a model registers the zeros of ``f'`` (``critical_points``), ``f'`` has a
fixed sign between them and both integrals reduce to differences of ``f``.
Otherwise sign changes of ``f'`` are located numerically and the integrals are
evaluated by adaptive quadrature split at those points.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import InvalidParameterError, NumericalIntegrationError
from .grid import Boundary, LatticeState

__all__ = [
    "FluxModel",
    "EntropyPair",
    "eo_plus",
    "eo_minus",
    "eo_flux",
    "rusanov_flux",
    "NUMERICAL_FLUXES",
    "pad_ghosts",
    "divergence_values",
    "flux_divergence",
    "make_entropy_pair",
    "entropy_flux_fbeta",
    "kruzkov_flux",
    "numerical_entropy_flux",
    "make_flux",
    "register_flux",
    "flux_labels",
]

_QUAD_TOL = 1e-10
_GL8 = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class FluxModel:
    f: Callable
    f_prime: Callable
    lipschitz: float
    label: str
    # sign changes of f', optionally also its kinks; None means unknown -> quadrature
    critical_points: Optional[tuple] = None
    # ("burgers", 0.0)-style tag selecting the fused numba kernel
    kernel: Optional[tuple] = None

    def __post_init__(self):
        if not self.lipschitz > 0:
            raise InvalidParameterError("lipschitz must be positive")
        if abs(float(self.f(0.0))) > 1e-14:
            raise InvalidParameterError(f"flux {self.label!r} violates f(0) = 0")
        if self.critical_points is not None:
            object.__setattr__(self, "critical_points",
                               tuple(sorted(float(c) for c in self.critical_points)))


# --------------------------------------------------------------------------- EO split

def _split_exact(model: FluxModel, u: np.ndarray, positive: bool) -> np.ndarray:
    lo = np.minimum(u, 0.0)
    hi = np.maximum(u, 0.0)
    edges = (-np.inf,) + model.critical_points + (np.inf,)
    total = np.zeros_like(u)
    for a, b in zip(edges[:-1], edges[1:]):
        p = np.maximum(lo, a)
        q = np.minimum(hi, b)
        inc = np.where(q > p, model.f(q) - model.f(p), 0.0)
        total += np.maximum(inc, 0.0) if positive else np.minimum(inc, 0.0)
    return np.where(u >= 0, total, -total)


def _sign_changes(model: FluxModel, lo: float, hi: float, samples: int = 4097) -> list:
    """Zeros of ``f'`` in ``(lo, hi)`` where it changes sign, located by sampling
    and bracketing. Sign changes closer together than the sampling step can be
    missed; models with known structure should register ``critical_points``."""
    if not hi > lo:
        return []
    s = np.linspace(lo, hi, samples)
    d = np.asarray(model.f_prime(s), dtype=np.float64)
    sgn = np.sign(d)
    out = []
    for i in np.flatnonzero(sgn[:-1] * sgn[1:] < 0):
        out.append(optimize.brentq(lambda v: float(model.f_prime(v)), s[i], s[i + 1],
                                   xtol=1e-15, rtol=4 * np.finfo(float).eps))
    out.extend(float(v) for v in s[1:-1][sgn[1:-1] == 0])
    return sorted(out)


def _split_quad(model: FluxModel, u: float, positive: bool, points: Sequence[float]) -> float:
    clip = max if positive else min
    lo, hi = min(u, 0.0), max(u, 0.0)
    cuts = [lo, *(p for p in points if lo < p < hi), hi]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        val, _, info, *rest = integrate.quad(
            lambda s: clip(float(model.f_prime(s)), 0.0), a, b,
            epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200, full_output=1)
        if rest:
            raise NumericalIntegrationError(
                f"EO split of {model.label!r} did not converge at u={u}")
        total += val
    return total if u >= 0 else -total


def _split(model: FluxModel, u, positive: bool):
    arr = np.asarray(u, dtype=np.float64)
    if model.critical_points is not None:
        out = _split_exact(model, arr, positive)
    else:
        pts = _sign_changes(model, min(float(arr.min()), 0.0), max(float(arr.max()), 0.0)) \
            if arr.size else []
        out = np.vectorize(lambda v: _split_quad(model, v, positive, pts),
                           otypes=[np.float64])(arr)
    if positive:
        out = out + float(model.f(0.0))
    return out if arr.ndim else float(out)


def eo_plus(model: FluxModel, u):
    return _split(model, u, True)


def eo_minus(model: FluxModel, u):
    return _split(model, u, False)


def eo_flux(model: FluxModel, a, b):
    return eo_plus(model, a) + eo_minus(model, b)


def rusanov_flux(model: FluxModel, a, b):
    """Global Lax-Friedrichs flux; monotone for ``dt * lipschitz <= dx``."""
    return 0.5 * (model.f(a) + model.f(b)) - 0.5 * model.lipschitz * (b - a)


NUMERICAL_FLUXES = {"eo": eo_flux, "rusanov": rusanov_flux}


def pad_ghosts(u: np.ndarray, boundary: Boundary) -> np.ndarray:
    """Append one ghost cell on each side along the last axis."""
    if boundary is Boundary.PERIODIC:
        left, right = u[..., -1:], u[..., :1]
    elif boundary is Boundary.ZERO:
        left = right = np.zeros_like(u[..., :1])
    else:
        left, right = u[..., :1], u[..., -1:]
    return np.concatenate([left, u, right], axis=-1)


def divergence_values(model: FluxModel, u: np.ndarray, dx: float,
                      boundary: Boundary, numerical_flux=eo_flux) -> np.ndarray:
    w = pad_ghosts(u, boundary)
    if numerical_flux is eo_flux:
        fp, fm = eo_plus(model, w), eo_minus(model, w)
        interface = fp[..., :-1] + fm[..., 1:]
    else:
        interface = numerical_flux(model, w[..., :-1], w[..., 1:])
    return np.diff(interface, axis=-1) / dx


def flux_divergence(model: FluxModel, state: LatticeState, numerical_flux=eo_flux) -> np.ndarray:
    return divergence_values(model, state.values, state.dx, state.grid.boundary, numerical_flux)


# ------------------------------------------------------------------- entropy pairs

@dataclass(frozen=True)
class EntropyPair:
    """Convex C^2 approximation ``xi * beta(r / xi)`` of ``|r|``.

    The base profile has ``beta'' = 15/8 (1 - r^2)^2`` on ``|r| <= 1`` and zero
    outside, normalised so that ``beta'(+-1) = +-1`` and ``beta(0) = 0``.
    Outside the smoothing zone ``beta(r) = |r| - M1 * xi``.
    """

    xi: float
    M1: float = 5.0 / 16.0
    M2: float = 15.0 / 8.0

    def beta(self, r):
        s = np.asarray(r, dtype=np.float64) / self.xi
        a = np.abs(s)
        inner = (15.0 / 8.0) * (s**2 / 2 - s**4 / 6 + s**6 / 30)
        return self.xi * np.where(a <= 1.0, inner, a - self.M1)

    def beta_prime(self, r):
        s = np.asarray(r, dtype=np.float64) / self.xi
        inner = (15.0 / 8.0) * (s - 2 * s**3 / 3 + s**5 / 5)
        return np.clip(np.where(np.abs(s) <= 1.0, inner, np.sign(s)), -1.0, 1.0)

    def beta_doubleprime(self, r):
        s = np.asarray(r, dtype=np.float64) / self.xi
        return np.where(np.abs(s) <= 1.0, (15.0 / 8.0) * (1 - s**2) ** 2, 0.0) / self.xi


def make_entropy_pair(xi: float) -> EntropyPair:
    if not xi > 0:
        raise InvalidParameterError(f"xi must be positive, got {xi}")
    return EntropyPair(float(xi))


def _breakpoints(model: FluxModel, lo: float, hi: float) -> list:
    pts = [c for c in (model.critical_points or ()) if lo < c < hi]
    return [lo, *pts, hi]


def entropy_flux_fbeta(model: FluxModel, pair: EntropyPair, a: float, b: float) -> float:
    """``int_b^a beta'(r - b) f'(r) dr`` by adaptive quadrature."""
    if a == b:
        return 0.0
    lo, hi = min(a, b), max(a, b)
    pts = [p for p in (b - pair.xi, b + pair.xi, *(model.critical_points or ()))
           if lo < p < hi]
    val, _, info, *rest = integrate.quad(
        lambda r: float(pair.beta_prime(r - b)) * float(model.f_prime(r)), lo, hi,
        points=pts or None, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200, full_output=1)
    if rest:
        raise NumericalIntegrationError(f"f^beta quadrature failed for a={a}, b={b}")
    return val if a > b else -val


def kruzkov_flux(model: FluxModel, a, b):
    return np.sign(a - b) * (model.f(a) - model.f(b))


def _gl_integrate(func, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Integral of ``func`` over ``[p, q]`` (elementwise; q may be < p)."""
    nodes, weights = _GL8
    half = 0.5 * (q - p)
    mid = 0.5 * (q + p)
    x = mid[..., None] + half[..., None] * nodes
    return half * (func(x) @ weights)


def _gl_from_k(integrand, k: float, w: np.ndarray, bps: list) -> np.ndarray:
    # exact up to rounding when the integrand is a polynomial of degree <= 15
    # between consecutive breakpoints
    lo, hi = np.minimum(w, k), np.maximum(w, k)
    acc = np.zeros_like(w)
    for a, b in zip(bps[:-1], bps[1:]):
        p = np.maximum(lo, a)
        q = np.minimum(hi, b)
        acc += np.where(q > p, _gl_integrate(integrand, p, np.maximum(p, q)), 0.0)
    return np.where(w >= k, acc, -acc)


def _quad_from_k(integrand, k: float, w: float, pts: list) -> float:
    lo, hi = min(w, k), max(w, k)
    if hi <= lo:
        return 0.0
    inner = [p for p in pts if lo < p < hi]
    val, _, info, *rest = integrate.quad(
        lambda s: float(integrand(np.float64(s))), lo, hi, points=inner or None,
        epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200, full_output=1)
    if rest:
        raise NumericalIntegrationError(f"entropy flux quadrature failed at u={w}")
    return val if w >= k else -val


def _eo_entropy_part(model: FluxModel, pair: EntropyPair, k: float,
                     u: np.ndarray, positive: bool) -> np.ndarray:
    # int_k^u beta'(s - k) (f_pm)'(s) ds; beta' = +-1 beyond k +- xi
    xi = pair.xi
    split = eo_plus if positive else eo_minus
    clip = np.maximum if positive else np.minimum

    def integrand(s):
        return pair.beta_prime(s - k) * clip(model.f_prime(s), 0.0)

    if model.critical_points is None:
        pts = _sign_changes(model, k - xi, k + xi)

        def from_k(w):
            return np.array([_quad_from_k(integrand, k, v, pts) for v in w])
    else:
        bps = _breakpoints(model, k - xi, k + xi)

        def from_k(w):
            return _gl_from_k(integrand, k, w, bps)

    # only values inside the smoothing band need quadrature
    band = np.abs(u - k) < xi
    ends = from_k(np.array([k - xi, k + xi]))
    inner = np.where(u >= k, ends[1], ends[0])
    if band.any():
        inner[band] = from_k(u[band])
    outer = np.where(u > k + xi, split(model, u) - split(model, k + xi), 0.0)
    outer = outer + np.where(u < k - xi, split(model, k - xi) - split(model, u), 0.0)
    return inner + outer


def numerical_entropy_flux(model: FluxModel, pair: EntropyPair, k: float, a, b,
                           numerical_flux=eo_flux) -> np.ndarray:
    """Entropy flux compatible with a monotone numerical flux, up to a constant.

    For EO this is ``zeta_plus(a) + zeta_minus(b)`` with
    ``zeta_pm(u) = int_k^u beta'(s - k) (f_pm)'(s) ds``. Other monotone fluxes
    use the superposition of Kruzkov numerical entropy fluxes
    ``F(a v s, b v s) - F(a ^ s, b ^ s)`` weighted by ``beta''(s - k) / 2``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if numerical_flux is eo_flux:
        return (_eo_entropy_part(model, pair, k, a, True)
                + _eo_entropy_part(model, pair, k, b, False))
    nodes, weights = np.polynomial.legendre.leggauss(64)
    s = k + pair.xi * nodes
    wts = 0.5 * pair.xi * weights * pair.beta_doubleprime(s - k)
    aa, bb = a[..., None], b[..., None]
    g = (numerical_flux(model, np.maximum(aa, s), np.maximum(bb, s))
         - numerical_flux(model, np.minimum(aa, s), np.minimum(bb, s)))
    return g @ wts


# ------------------------------------------------------------------ built-in models

def _linear_f(c, u):
    return c * np.asarray(u, dtype=np.float64)


def _linear_fp(c, u):
    return c * np.ones_like(np.asarray(u, dtype=np.float64))


def _burgers_f(u):
    return 0.5 * np.square(u)


def _burgers_fp(u):
    return np.asarray(u, dtype=np.float64) * 1.0


def _decreasing_f(u):
    u = np.asarray(u, dtype=np.float64)
    return -0.5 * u * np.abs(u) - u


def _decreasing_fp(u):
    return -np.abs(np.asarray(u, dtype=np.float64)) - 1.0


def linear(c: float = 1.0, **_) -> FluxModel:
    return FluxModel(functools.partial(_linear_f, c), functools.partial(_linear_fp, c),
                     abs(c) if c else 1.0, "linear", (), ("linear", float(c)))


def zero(**_) -> FluxModel:
    # lipschitz is nominal here; it only sets the time step
    return FluxModel(functools.partial(_linear_f, 0.0), functools.partial(_linear_fp, 0.0),
                     1.0, "zero", (), ("zero", 0.0))


def burgers(u_bound: float = 1.0, **_) -> FluxModel:
    return FluxModel(_burgers_f, _burgers_fp, float(u_bound), "burgers", (0.0,),
                     ("burgers", 0.0))


def decreasing(u_bound: float = 1.0, **_) -> FluxModel:
    # f' never vanishes; 0 is registered because f' has a kink there
    return FluxModel(_decreasing_f, _decreasing_fp, 1.0 + float(u_bound), "decreasing", (0.0,),
                     ("decreasing", 0.0))


_REGISTRY: dict[str, Callable[..., FluxModel]] = {
    "linear": linear,
    "zero": zero,
    "burgers": burgers,
    "decreasing": decreasing,
}


def register_flux(label: str, factory: Callable[..., FluxModel]) -> None:
    _REGISTRY[label] = factory


def flux_labels() -> list:
    return sorted(_REGISTRY)


def make_flux(label: str, **params) -> FluxModel:
    try:
        factory = _REGISTRY[label]
    except KeyError:
        raise InvalidParameterError(f"unknown flux label {label!r}") from None
    return factory(**params)
