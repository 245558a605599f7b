"""Noise coefficients, Levy measures and reproducible noise paths.

A single scalar Wiener process and a single Poisson random measure drive
every cell, so one :class:`NoisePath` can be replayed on any grid whose time
step is a multiple of the path's micro step.
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import (AlignmentError, InvalidParameterError, NumericalIntegrationError,
                     UnsupportedMeasureError)

__all__ = [
    "DiffusionCoefficient",
    "JumpCoefficient",
    "LevyMeasureSpec",
    "StableLikeDensity",
    "NoisePath",
    "linear_diffusion",
    "linear_jump",
    "sample_path",
    "brownian_on_step",
    "jumps_on_step",
    "compensator",
    "make_generator",
    "write_path",
    "read_path",
]

_QUAD_TOL = 1e-9
_MASK64 = (1 << 64) - 1


def make_generator(seed: int, stream: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``(seed, stream)``."""
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ------------------------------------------------------------------- coefficients

def _ramp(u, M):
    # 1 on |u| <= 0.9 M, 0 on |u| >= M, C^1 smoothstep in between
    t = np.clip((np.abs(u) - 0.9 * M) / (0.1 * M), 0.0, 1.0)
    return 1.0 - t * t * (3.0 - 2.0 * t)


def _tent(u, M):
    a = np.abs(u)
    return np.sign(u) * np.maximum(0.0, np.minimum(a, M - a))


def _linear_sigma(a, M, u):
    u = np.asarray(u, dtype=np.float64)
    return a * u * _ramp(u, M)


def _unit_tent(M, u):
    return _tent(np.asarray(u, dtype=np.float64), M)


def _clipped_abs(z):
    return np.minimum(np.abs(z), 1.0)


@dataclass(frozen=True)
class DiffusionCoefficient:
    sigma: Callable
    lipschitz_sigma: float
    cutoff_M: float
    label: str = "custom"
    kernel: Optional[tuple] = None

    def __post_init__(self):
        if not self.cutoff_M > 0:
            raise InvalidParameterError("cutoff_M must be positive")


@dataclass(frozen=True)
class JumpCoefficient:
    """Jump amplitude ``eta(u, z)``.

    When ``u_factor`` and ``z_factor`` are given, ``eta`` is assumed to equal
    ``scale * u_factor(u) * z_factor(z)`` and compensators are evaluated in
    closed form over the atoms.
    """

    eta: Callable
    lambda_star: float
    cutoff_M: float
    label: str = "custom"
    u_factor: Optional[Callable] = None
    z_factor: Optional[Callable] = None
    scale: float = 1.0
    kernel: Optional[tuple] = None

    def __post_init__(self):
        if not 0 < self.lambda_star < 1:
            raise InvalidParameterError(
                f"lambda_star must lie in (0, 1), got {self.lambda_star}")
        if not self.cutoff_M > 0:
            raise InvalidParameterError("cutoff_M must be positive")


def linear_diffusion(a: float, M: float) -> DiffusionCoefficient:
    """``sigma(u) = a u`` switched off beyond ``M`` by a ramp of width ``0.1 M``."""
    return DiffusionCoefficient(functools.partial(_linear_sigma, float(a), float(M)),
                                16.0 * abs(a), float(M), "linear",
                                ("ramp", float(a), float(M)))


def _separable_eta(b, M, u, z):
    return b * _tent(np.asarray(u, dtype=np.float64), M) * _clipped_abs(z)


def linear_jump(b: float, M: float) -> JumpCoefficient:
    """``eta(u, z) = b u min(|z|, 1)`` on ``|u| <= M/2``, tapered to 0 at ``M``.

    The taper has slope -1, so the Lipschitz constant in ``u`` stays ``|b|``.
    """
    return JumpCoefficient(functools.partial(_separable_eta, float(b), float(M)),
                           abs(float(b)), float(M), "linear",
                           u_factor=functools.partial(_unit_tent, float(M)),
                           z_factor=_clipped_abs, scale=float(b),
                           kernel=("tent", float(b), float(M)))


# ---------------------------------------------------------------- Levy measures

@dataclass(frozen=True)
class StableLikeDensity:
    """``c |z|^(-1-alpha)``; satisfies the (1 ^ z^2) integrability for 0 < alpha < 2."""

    c: float
    alpha: float

    def __call__(self, z):
        return self.c * np.abs(z) ** (-1.0 - self.alpha)

    def tail_quantile(self, eps: float, mass: float) -> float:
        """The ``z > eps`` with ``int_eps^z c s^(-1-alpha) ds = mass`` (one side)."""
        return (eps ** -self.alpha - self.alpha * mass / self.c) ** (-1.0 / self.alpha)


@dataclass(frozen=True)
class LevyMeasureSpec:
    atoms: tuple = ()
    density: Optional[Callable] = None
    truncation_eps: float = 0.0

    def __post_init__(self):
        atoms = tuple((float(z), float(r)) for z, r in self.atoms)
        for z, r in atoms:
            if z == 0 or not r > 0:
                raise InvalidParameterError(f"invalid atom (z={z}, rate={r})")
        object.__setattr__(self, "atoms", atoms)
        if self.density is not None and not self.truncation_eps > 0:
            raise InvalidParameterError("a density part needs truncation_eps > 0")

    @functools.cached_property
    def _side_masses(self) -> tuple:
        return self._density_mass(weight=None)

    def _density_mass(self, weight=None):
        weight = weight or (lambda z: 1.0)
        if self.density is None:
            return 0.0, 0.0
        e = self.truncation_eps
        g = lambda z: weight(z) * float(self.density(z))
        try:
            neg = _quad(g, -np.inf, -e, strict=True)
            pos = _quad(g, e, np.inf, strict=True)
        except NumericalIntegrationError:
            raise UnsupportedMeasureError(
                "Levy density is not integrable away from the origin") from None
        return neg, pos

    @property
    def total_mass(self) -> float:
        neg, pos = self._side_masses
        lam = sum(r for _, r in self.atoms) + neg + pos
        if not math.isfinite(lam):
            raise UnsupportedMeasureError("truncated Levy measure has infinite mass")
        return lam

    def moment_condition(self) -> float:
        """``int min(1, z^2) dm`` over the simulated part of the measure."""
        neg, pos = self._density_mass(lambda z: min(1.0, z * z))
        return sum(r * min(1.0, z * z) for z, r in self.atoms) + neg + pos

    def small_jump_variance(self) -> float:
        """``int_{0<|z|<=eps} z^2 dm``: the dropped small-jump mass."""
        if self.density is None:
            return 0.0
        e = self.truncation_eps
        g = lambda z: z * z * float(self.density(z))
        return _quad(g, -e, 0.0) + _quad(g, 0.0, e)

    def quadrature_rule(self, panels: int = 24) -> tuple:
        """Nodes and weights integrating ``g(z) m(dz)`` over the simulated measure.

        Atoms enter with their rates; the density part uses Gauss-Legendre
        panels on ``eps <= |z| <= 1`` (geometric) and ``z = 1/t`` beyond.
        """
        zs = [z for z, _ in self.atoms]
        ws = [r for _, r in self.atoms]
        if self.density is not None:
            nodes, weights = np.polynomial.legendre.leggauss(8)
            e = self.truncation_eps
            edges = np.geomspace(e, 1.0, panels + 1) if e < 1 else np.array([])
            for a, b in zip(edges[:-1], edges[1:]):
                z = 0.5 * (b + a) + 0.5 * (b - a) * nodes
                w = 0.5 * (b - a) * weights
                for sgn in (1.0, -1.0):
                    zs.extend(sgn * z)
                    ws.extend(w * np.asarray(self.density(sgn * z)))
            # z = 1/t; geometric panels resolve the t^(alpha-1) behaviour at t = 0
            t_hi = min(1.0, 1.0 / e)
            t_edges = np.concatenate([[0.0], np.geomspace(1e-12 * t_hi, t_hi, 2 * panels)])
            for a, b in zip(t_edges[:-1], t_edges[1:]):
                t = 0.5 * (b + a) + 0.5 * (b - a) * nodes
                w = 0.5 * (b - a) * weights / t ** 2
                for sgn in (1.0, -1.0):
                    zs.extend(sgn / t)
                    ws.extend(w * np.asarray(self.density(sgn / t)))
        return np.array(zs, dtype=np.float64), np.array(ws, dtype=np.float64)

    def sample_marks(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n == 0:
            return np.empty(0)
        neg, pos = self._side_masses
        weights = np.array([r for _, r in self.atoms] + [neg, pos])
        idx = rng.choice(len(weights), size=n, p=weights / weights.sum())
        u = rng.random(n)
        marks = np.empty(n)
        n_atoms = len(self.atoms)
        quantile = getattr(self.density, "tail_quantile", None)
        if quantile is not None:
            e = self.truncation_eps
            for i in range(n):
                if idx[i] < n_atoms:
                    marks[i] = self.atoms[idx[i]][0]
                else:
                    sgn = -1.0 if idx[i] == n_atoms else 1.0
                    marks[i] = sgn * quantile(e, u[i] * (neg if sgn < 0 else pos))
            return marks
        for i in range(n):
            if idx[i] < n_atoms:
                marks[i] = self.atoms[idx[i]][0]
            elif idx[i] == n_atoms:
                marks[i] = -self._invert_tail(u[i] * neg, lambda z: float(self.density(-z)))
            else:
                marks[i] = self._invert_tail(u[i] * pos, lambda z: float(self.density(z)))
        return marks

    def _invert_tail(self, target, dens):
        # smallest z > eps with int_eps^z dens = target
        e = self.truncation_eps
        cdf = lambda z: _quad(dens, e, z) - target
        hi = 2 * e
        while cdf(hi) < 0:
            hi *= 2
            if hi > 1e12:
                raise NumericalIntegrationError("could not bracket Levy mark quantile")
        return optimize.brentq(cdf, e, hi, xtol=1e-13)


def _quad(g, a, b, strict=False):
    val, _, info, *rest = integrate.quad(g, a, b, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL,
                                         limit=200, full_output=1)
    if rest and (strict or not math.isfinite(val)):
        raise NumericalIntegrationError(f"quadrature failed on [{a}, {b}]")
    return val


# ------------------------------------------------------------------- noise paths

@dataclass(frozen=True, eq=False)
class NoisePath:
    seed: int
    T: float
    dt_micro: float
    brownian_increments: np.ndarray
    jump_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    jump_marks: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        for name in ("brownian_increments", "jump_times", "jump_marks"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.jump_times) != len(self.jump_marks):
            raise ValueError("jump_times and jump_marks differ in length")
        if len(self.jump_times) and (np.any(np.diff(self.jump_times) <= 0)
                                     or self.jump_times[0] <= 0
                                     or self.jump_times[-1] > self.T):
            raise ValueError("jump times must be strictly increasing in (0, T]")
        idx = np.clip(np.ceil(self.jump_times / self.dt_micro) - 1, 0,
                      self.n_micro - 1).astype(np.int64)
        object.__setattr__(self, "_jump_micro", idx)

    @property
    def n_micro(self) -> int:
        return len(self.brownian_increments)

    @property
    def jumps(self) -> list:
        return list(zip(self.jump_times.tolist(), self.jump_marks.tolist()))

    def micro_index(self, t: float) -> int:
        i = round(t / self.dt_micro)
        if abs(i * self.dt_micro - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= i <= self.n_micro:
            raise AlignmentError(f"time {t} is not a multiple of dt_micro={self.dt_micro}")
        return int(i)

    def step_increments(self, stride: int) -> np.ndarray:
        """Brownian increments aggregated over consecutive blocks of ``stride`` micro steps."""
        if self.n_micro % stride:
            raise AlignmentError(f"stride {stride} does not divide {self.n_micro} micro steps")
        return self.brownian_increments.reshape(-1, stride).sum(axis=1)

    def step_jumps(self, stride: int) -> list:
        """Jump marks grouped by coarse step of ``stride`` micro steps."""
        out = [[] for _ in range(self.n_micro // stride)]
        for m, z in zip(self._jump_micro // stride, self.jump_marks):
            out[m].append(float(z))
        return out

    def __eq__(self, other):
        if not isinstance(other, NoisePath):
            return NotImplemented
        return (self.seed == other.seed and self.T == other.T
                and self.dt_micro == other.dt_micro
                and np.array_equal(self.brownian_increments, other.brownian_increments)
                and np.array_equal(self.jump_times, other.jump_times)
                and np.array_equal(self.jump_marks, other.jump_marks))

    __hash__ = None


def n_micro_steps(T: float, dt_micro: float) -> int:
    return int(math.ceil(T / dt_micro - 1e-9))


def sample_path(spec: LevyMeasureSpec, T: float, dt_micro: float, seed: int) -> NoisePath:
    if not (T > 0 and dt_micro > 0):
        raise InvalidParameterError("T and dt_micro must be positive")
    lam = spec.total_mass
    n = n_micro_steps(T, dt_micro)
    dW = make_generator(seed, 0).standard_normal(n) * math.sqrt(dt_micro)
    rng = make_generator(seed, 1)
    n_jumps = int(rng.poisson(lam * T)) if lam > 0 else 0
    times = np.sort(T * (1.0 - rng.random(n_jumps)))
    marks = spec.sample_marks(rng, n_jumps)
    return NoisePath(int(seed), float(T), float(dt_micro), dW, times, marks)


def brownian_on_step(path: NoisePath, t0: float, t1: float) -> float:
    i0, i1 = path.micro_index(t0), path.micro_index(t1)
    if i1 < i0:
        raise AlignmentError("t1 must not precede t0")
    return float(path.brownian_increments[i0:i1].sum())


def jumps_on_step(path: NoisePath, t0: float, t1: float) -> list:
    i0, i1 = path.micro_index(t0), path.micro_index(t1)
    sel = (path._jump_micro >= i0) & (path._jump_micro < i1)
    return path.jump_marks[sel].tolist()


def separable_mass(jc: JumpCoefficient, spec: LevyMeasureSpec) -> float:
    """``int z_factor(z) m(dz)`` for a separable jump coefficient."""
    zmass = sum(r * float(jc.z_factor(z)) for z, r in spec.atoms)
    neg, pos = spec._density_mass(lambda z: float(jc.z_factor(z)))
    return zmass + neg + pos


def compensator(jc: Optional[JumpCoefficient], spec: LevyMeasureSpec, u):
    """``int eta(u, z) m(dz)`` over the simulated (truncated) measure."""
    arr = np.asarray(u, dtype=np.float64)
    if jc is None or (not spec.atoms and spec.density is None):
        return np.zeros_like(arr) if arr.ndim else 0.0
    if jc.u_factor is not None:
        out = jc.scale * jc.u_factor(arr) * separable_mass(jc, spec)
    else:
        def one(v):
            total = sum(r * float(jc.eta(v, z)) for z, r in spec.atoms)
            if spec.density is not None:
                e = spec.truncation_eps
                g = lambda z: float(jc.eta(v, z)) * float(spec.density(z))
                total += _quad(g, -np.inf, -e) + _quad(g, e, np.inf)
            return total
        out = np.vectorize(one, otypes=[np.float64])(arr)
    return out if arr.ndim else float(out)


# ------------------------------------------------------------- binary sidecar

_HEADER = struct.Struct("<8sqddqq")
_MAGIC = b"LEVYPTH1"


def write_path(path: NoisePath, filename) -> None:
    with open(filename, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, path.seed, path.T, path.dt_micro,
                              path.n_micro, len(path.jump_times)))
        fh.write(path.brownian_increments.astype("<f8").tobytes())
        fh.write(np.column_stack([path.jump_times, path.jump_marks]).astype("<f8").tobytes())


def read_path(filename) -> NoisePath:
    with open(filename, "rb") as fh:
        magic, seed, T, dt, n, nj = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC:
            raise ValueError(f"{filename}: not a noise path file")
        inc = np.frombuffer(fh.read(8 * n), dtype="<f8")
        jumps = np.frombuffer(fh.read(16 * nj), dtype="<f8").reshape(nj, 2)
    return NoisePath(seed, T, dt, inc, jumps[:, 0], jumps[:, 1])
