"""Explicit Euler-Maruyama integration of the semi-discrete EO scheme.

One step maps ``u`` to

    u - dt * D(u) + sigma(u) dW + sum_k eta(u, z_k) - dt * int eta(u, z) m(dz)

where ``D`` is the conservative EO flux difference and every coefficient is
evaluated at the start-of-step state.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AlignmentError, BlowUpError, ConfigError, StabilityViolationError
from .flux import NUMERICAL_FLUXES, FluxModel, divergence_values
from .grid import Grid1D, LatticeState, project_initial
from . import kernels
from .noise import (DiffusionCoefficient, JumpCoefficient, LevyMeasureSpec, NoisePath,
                    compensator, n_micro_steps, separable_mass)

__all__ = [
    "SchemeConfig",
    "Trajectory",
    "step",
    "time_step",
    "solve_path",
    "coupled_micro_step",
    "coupled_solve",
    "linf_bound",
]

_TIME_TOL = 1e-9


@dataclass(frozen=True)
class SchemeConfig:
    flux: FluxModel
    T: float
    cfl: float = 0.5
    sigma: Optional[DiffusionCoefficient] = None
    eta: Optional[JumpCoefficient] = None
    levy: LevyMeasureSpec = field(default_factory=LevyMeasureSpec)
    # None records every step
    record_times: Optional[tuple] = None
    jump_adapted: bool = False
    numerical_flux: str = "eo"
    blowup_factor: float = 10.0

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl", f"must lie in (0, 1], got {self.cfl}")
        if not self.T > 0:
            raise ConfigError("T", "must be positive")
        if self.numerical_flux not in NUMERICAL_FLUXES:
            raise ConfigError("numerical_flux", f"unknown flux {self.numerical_flux!r}")
        if self.record_times is not None:
            rt = tuple(float(t) for t in self.record_times)
            if list(rt) != sorted(rt) or (rt and (rt[0] < 0 or rt[-1] > self.T + _TIME_TOL)):
                raise ConfigError("record_times", "must be sorted within [0, T]")
            object.__setattr__(self, "record_times", rt)

    @property
    def cutoff_M(self) -> float:
        return max([c.cutoff_M for c in (self.sigma, self.eta) if c is not None], default=0.0)

    @property
    def has_jumps(self) -> bool:
        return self.eta is not None and (bool(self.levy.atoms) or self.levy.density is not None)

    def dt_max(self, grid: Grid1D) -> float:
        return self.cfl * grid.dx / self.flux.lipschitz


def linf_bound(config: SchemeConfig, u0_values: np.ndarray) -> float:
    """``max(2M, ||u0||_inf)`` with ``M`` the coefficient cutoff."""
    return max(2.0 * config.cutoff_M, float(np.max(np.abs(u0_values))))


@dataclass
class Trajectory:
    snapshots: list
    diagnostics: dict
    dt: float
    stride: int
    seed: Optional[int] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def final(self) -> LatticeState:
        return self.snapshots[-1]

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.snapshots])

    def diagnostics_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            for line in comment.splitlines():
                buf.write(f"# {line}\n")
        buf.write("step,t,mass,bv,linf,l2\n")
        d = self.diagnostics
        for i in range(len(d["step"])):
            buf.write(f"{int(d['step'][i])},{d['t'][i]:.17g},{d['mass'][i]:.17g},"
                      f"{d['bv'][i]:.17g},{d['linf'][i]:.17g},{d['l2'][i]:.17g}\n")
        return buf.getvalue()


class _Stepper:
    """Per-run constants for the array-level update."""

    def __init__(self, config: SchemeConfig, grid: Grid1D, fused: bool | None = None):
        self.config = config
        self.flux = config.flux
        self.nf = NUMERICAL_FLUXES[config.numerical_flux]
        self.dx = grid.dx
        self.boundary = grid.boundary
        self.bcode = kernels.BOUNDARY_CODES[grid.boundary.value]
        self.sigma = config.sigma.sigma if config.sigma is not None else None
        self.jumps = config.has_jumps
        can_fuse = (config.flux.kernel is not None and config.numerical_flux == "eo"
                    and (config.sigma is None or config.sigma.kernel is not None)
                    and (not self.jumps or config.eta.kernel is not None))
        self.fused = can_fuse if fused is None else (fused and can_fuse)
        if self.fused:
            kind, c = config.flux.kernel
            self.fkind, self.fc = kernels.FLUX_CODES[kind], float(c)
            self.sig = (config.sigma.kernel[1:] if config.sigma is not None else (0.0, 0.0))
            self.eta = (config.eta.kernel[1:] if self.jumps else (0.0, 0.0))
            self.comp_mass = separable_mass(config.eta, config.levy) if self.jumps else 0.0

    def max_speed(self, u) -> float:
        if self.fused:
            return kernels.max_wave_speed(u, self.fkind, self.fc)
        return float(np.max(np.abs(self.flux.f_prime(u))))

    def advance_fused(self, u, out, dt, dW, marks):
        zsum = 0.0
        for z in marks:
            zsum += min(abs(z), 1.0)
        kernels.em_step(u, out, self.dx, dt, dW, zsum - dt * self.comp_mass,
                        self.fkind, self.fc, self.sig[0], self.sig[1],
                        self.eta[0], self.eta[1], self.bcode)
        return out

    def drift(self, u, dt):
        out = u - dt * divergence_values(self.flux, u, self.dx, self.boundary, self.nf)
        if self.jumps:
            out -= dt * compensator(self.config.eta, self.config.levy, u)
        return out

    def advance(self, u, dt, dW, marks):
        new = self.drift(u, dt)
        if self.sigma is not None and dW != 0.0:
            new += self.sigma(u) * dW
        if self.jumps:
            eta = self.config.eta.eta
            for z in marks:
                new += eta(u, z)
        return new

    def advance_adapted(self, u, dt_micro, increments, offsets, marks):
        """Sub-step at the micro boundaries that follow each jump."""
        cuts = sorted(set(int(o) + 1 for o in offsets) | {len(increments)})
        start = 0
        for cut in cuts:
            if cut > start:
                u = self.advance(u, (cut - start) * dt_micro,
                                 float(increments[start:cut].sum()), ())
            for o, z in zip(offsets, marks):
                if int(o) + 1 == cut and self.jumps:
                    u = u + self.config.eta.eta(u, z)
            start = cut
        return u


def step(state: LatticeState, dt: float, dW: float, jump_marks: Sequence[float],
         config: SchemeConfig) -> LatticeState:
    """Single explicit update of ``state`` with the given noise increments."""
    stepper = _Stepper(config, state.grid)
    if stepper.fused:
        new = stepper.advance_fused(state.values, np.empty(state.grid.n_cells), dt, dW, jump_marks)
    else:
        new = stepper.advance(state.values, dt, dW, jump_marks)
    if not np.all(np.isfinite(new)):
        raise BlowUpError("non-finite value after step", step=0)
    return LatticeState(new, state.grid, state.time + dt)


def time_step(config: SchemeConfig, grid: Grid1D, dt_micro: float) -> tuple:
    """Largest aligned step: returns ``(dt, stride, n_steps)``.

    ``stride`` is the largest divisor of ``T / dt_micro`` with
    ``stride * dt_micro <= cfl * dx / lipschitz``.
    """
    n = n_micro_steps(config.T, dt_micro)
    if abs(n * dt_micro - config.T) > _TIME_TOL * max(1.0, config.T):
        raise AlignmentError(f"T={config.T} is not a multiple of dt_micro={dt_micro}")
    limit = int(math.floor(config.dt_max(grid) / dt_micro * (1 + 1e-12)))
    if limit < 1:
        raise AlignmentError(
            f"dt_micro={dt_micro} exceeds the CFL step {config.dt_max(grid)} on {grid.n_cells} cells")
    stride = max(d for d in range(1, min(limit, n) + 1) if n % d == 0)
    return stride * dt_micro, stride, n // stride


def _record_steps(config: SchemeConfig, dt: float, n_steps: int) -> list:
    if config.record_times is None:
        return list(range(n_steps + 1))
    out = []
    for t in config.record_times:
        k = round(t / dt)
        if abs(k * dt - t) > _TIME_TOL * max(1.0, t):
            raise AlignmentError(f"record time {t} is not a multiple of dt={dt}")
        out.append(int(k))
    return out


def solve_path(config: SchemeConfig, grid: Grid1D, u0_state: LatticeState,
               path: NoisePath, stride: int | None = None, log: bool = True,
               fused: bool | None = None) -> Trajectory:
    """Integrate from ``u0_state`` to ``config.T`` driven by ``path``.

    ``stride`` fixes the step to ``stride * path.dt_micro``; by default the
    largest aligned CFL step is used. ``fused=False`` forces the numpy path.
    """
    if path.T < config.T - _TIME_TOL:
        raise AlignmentError("noise path is shorter than the horizon T")
    if u0_state.grid != grid:
        raise ConfigError("u0_state", "initial state lives on a different grid")
    if stride is None:
        _, stride, n_steps = time_step(config, grid, path.dt_micro)
    else:
        n_total = n_micro_steps(config.T, path.dt_micro)
        if n_total % stride or stride * path.dt_micro > config.dt_max(grid) * (1 + 1e-12):
            raise AlignmentError(f"stride {stride} is misaligned or violates the CFL bound")
        n_steps = n_total // stride
    dt = stride * path.dt_micro
    n_micro = n_steps * stride
    incs = path.brownian_increments[:n_micro]
    dW = incs.reshape(n_steps, stride).sum(axis=1)
    in_horizon = path._jump_micro < n_micro
    j_micro = path._jump_micro[in_horizon]
    j_marks = path.jump_marks[in_horizon]
    j_step = j_micro // stride

    stepper = _Stepper(config, grid, fused=None if fused is None else fused and not config.jump_adapted)
    u = np.array(u0_state.values, dtype=np.float64)
    buf = np.empty_like(u)
    bound = linf_bound(config, u)
    guard = config.blowup_factor * bound
    cfl_limit = grid.dx / dt * (1 + 1e-9)

    record = _record_steps(config, dt, n_steps)
    record_set: dict = {}
    for i, k in enumerate(record):
        record_set.setdefault(k, []).append(i)
    snaps: list = [None] * len(record)
    keys = ("mass", "bv", "linf", "l2")
    diag = {key: np.zeros(n_steps + 1) for key in keys} if log else {}

    def _observe(n, arr):
        mass, tv, mx, l2, finite = kernels.state_summary(arr, grid.dx, stepper.bcode)
        if not finite:
            raise BlowUpError(f"non-finite state at step {n}", step=n, seed=path.seed)
        if bound > 0 and mx > guard:
            raise StabilityViolationError(
                f"|u| exceeded {config.blowup_factor} x L-infinity bound {bound} at step {n}",
                step=n, seed=path.seed)
        if log:
            diag["mass"][n], diag["bv"][n], diag["linf"][n], diag["l2"][n] = mass, tv, mx, l2
        for i in record_set.get(n, ()):
            snaps[i] = LatticeState(arr, grid, n * dt)

    _observe(0, u)
    ptr = 0
    n_j = len(j_step)
    for n in range(n_steps):
        start = ptr
        while ptr < n_j and j_step[ptr] == n:
            ptr += 1
        marks = j_marks[start:ptr]
        if stepper.max_speed(u) > cfl_limit:
            raise StabilityViolationError(
                f"CFL monotonicity lost at step {n}: max|f'(u)| exceeds dx/dt", step=n,
                seed=path.seed)
        if config.jump_adapted and ptr > start:
            offsets = j_micro[start:ptr] - n * stride
            u = stepper.advance_adapted(u, path.dt_micro, incs[n * stride:(n + 1) * stride],
                                        offsets, marks)
        elif stepper.fused:
            u, buf = stepper.advance_fused(u, buf, dt, float(dW[n]), marks), u
        else:
            u = stepper.advance(u, dt, float(dW[n]), marks)
        _observe(n + 1, u)

    if log:
        diag["step"] = np.arange(n_steps + 1)
        diag["t"] = diag["step"] * dt
    return Trajectory(snaps, diag, dt, stride, path.seed)


def _check_nested(grids: Sequence[Grid1D]) -> list:
    finest = max(grids, key=lambda g: g.n_cells)
    ratios = []
    for g in grids:
        r, rem = divmod(finest.n_cells, g.n_cells)
        if rem or r & (r - 1) or (g.x_min, g.x_max, g.boundary) != (
                finest.x_min, finest.x_max, finest.boundary):
            raise ConfigError("grids", "grids must be nested by powers of two on one domain")
        ratios.append(r)
    return ratios


def coupled_micro_step(config: SchemeConfig, grids: Sequence[Grid1D]) -> float:
    """Micro step for a coupled run: the finest CFL step, with ``T/dt`` divisible
    by every refinement ratio."""
    ratios = _check_nested(grids)
    finest = max(grids, key=lambda g: g.n_cells)
    big = max(ratios)
    n = int(math.ceil(config.T / config.dt_max(finest) - 1e-12))
    n = big * int(math.ceil(n / big))
    return config.T / n


def coupled_solve(config: SchemeConfig, grids: Sequence[Grid1D], u0: Callable,
                  path: NoisePath, log: bool = True) -> list:
    """Solve on every grid with the same noise; the step scales with ``dx``."""
    ratios = _check_nested(grids)
    finest = max(grids, key=lambda g: g.n_cells)
    _, base, _ = time_step(config, finest, path.dt_micro)
    out = []
    for g, r in zip(grids, ratios):
        state = u0 if isinstance(u0, LatticeState) and u0.grid == g else project_initial(u0, g)
        out.append(solve_path(config, g, state, path, stride=base * r, log=log))
    return out
