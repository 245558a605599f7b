"""Uniform 1-D meshes, lattice states and discrete norms.

Cell ``j`` of a :class:`Grid1D` is the right-open interval
``[x_{j-1/2}, x_{j+1/2})`` and a :class:`LatticeState` is read as the
piecewise-constant function taking value ``u_j`` on it.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, InvalidInitialDataError

__all__ = [
    "Boundary",
    "Grid1D",
    "LatticeState",
    "project_initial",
    "reconstruct",
    "norm_lp",
    "bv_seminorm",
    "restrict",
    "l1_distance",
    "to_csv",
    "write_csv",
    "read_csv",
]

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    ZERO = "zero"
    # ghost cells copy the edge value; used for Riemann data with nonzero far field
    EXTRAPOLATE = "extrapolate"


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_cells: int
    boundary: Boundary = Boundary.ZERO

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError(f"n_cells must be an integer >= 2, got {self.n_cells}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx

    def refine(self, factor: int) -> "Grid1D":
        return Grid1D(self.x_min, self.x_max, self.n_cells * factor, self.boundary)

    def coarsen(self, factor: int) -> "Grid1D":
        if self.n_cells % factor:
            raise DimensionMismatchError(
                f"{self.n_cells} cells not divisible by {factor}")
        return Grid1D(self.x_min, self.x_max, self.n_cells // factor, self.boundary)


@dataclass(frozen=True, eq=False)
class LatticeState:
    values: np.ndarray
    grid: Grid1D
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != (self.grid.n_cells,):
            raise DimensionMismatchError(
                f"expected {self.grid.n_cells} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("lattice values must be finite")
        if self.time < 0:
            raise ValueError("time must be non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dx(self) -> float:
        return self.grid.dx

    def with_values(self, values, time=None) -> "LatticeState":
        return LatticeState(values, self.grid, self.time if time is None else time)


def _evaluate(u0: Callable, x: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(u0(x), dtype=np.float64)
        if out.shape == x.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.vectorize(u0, otypes=[np.float64])(x)


def cell_average(u0: Callable, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Average of ``u0`` over each ``[a_i, b_i]`` by 5-point Gauss-Legendre."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * _GAUSS_NODES[None, :]
    return 0.5 * (_evaluate(u0, x) @ _GAUSS_WEIGHTS)


def project_initial(u0: Callable, grid: Grid1D, subdivisions: int = 1) -> LatticeState:
    """Cell averages of ``u0`` on ``grid``.

    ``u0`` may be a scalar or a vectorised callable. Each cell is split into
    ``subdivisions`` equal pieces, each integrated with 5 Gauss nodes.
    """
    n = grid.n_cells * subdivisions
    e = grid.x_min + np.arange(n + 1) * (grid.length / n)
    avg = cell_average(u0, e[:-1], e[1:])
    vals = avg.reshape(grid.n_cells, subdivisions).mean(axis=1)
    if not np.all(np.isfinite(vals)):
        raise InvalidInitialDataError("initial data has non-finite cell averages")
    return LatticeState(vals, grid, 0.0)


def reconstruct(state: LatticeState, x: float) -> float:
    g = state.grid
    if g.boundary is Boundary.PERIODIC:
        x = g.x_min + math.fmod(x - g.x_min, g.length)
        if x < g.x_min:
            x += g.length
    elif not g.x_min <= x < g.x_max:
        if g.boundary is Boundary.ZERO:
            return 0.0
        return float(state.values[0] if x < g.x_min else state.values[-1])
    j = min(int(math.floor((x - g.x_min) / g.dx)), g.n_cells - 1)
    return float(state.values[j])


def norm_lp(state: LatticeState, p: float = 2) -> float:
    u = np.abs(state.values)
    if math.isinf(p):
        return float(u.max())
    if p < 1:
        raise ValueError("p must be >= 1")
    return float((state.dx * np.sum(u ** p)) ** (1.0 / p))


def bv_values(values: np.ndarray, boundary: Boundary) -> np.ndarray:
    """BV seminorm along the last axis of ``values`` (supports batches)."""
    v = np.asarray(values)
    tv = np.abs(np.diff(v, axis=-1)).sum(axis=-1)
    if boundary is Boundary.PERIODIC:
        tv = tv + np.abs(v[..., 0] - v[..., -1])
    elif boundary is Boundary.ZERO:
        tv = tv + np.abs(v[..., 0]) + np.abs(v[..., -1])
    return tv


def bv_seminorm(state: LatticeState) -> float:
    return float(bv_values(state.values, state.grid.boundary))


def restrict(fine: LatticeState, factor: int) -> LatticeState:
    if factor < 1 or int(factor) != factor:
        raise ValueError("factor must be a positive integer")
    coarse = fine.grid.coarsen(int(factor))
    vals = fine.values.reshape(coarse.n_cells, int(factor)).mean(axis=1)
    return LatticeState(vals, coarse, fine.time)


def l1_distance(a: LatticeState, b: LatticeState) -> float:
    if a.grid != b.grid:
        raise DimensionMismatchError("states live on different grids")
    return float(a.dx * np.sum(np.abs(a.values - b.values)))


def to_csv(state: LatticeState, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    buf.write("x,u\n")
    for x, u in zip(state.grid.centers, state.values):
        buf.write(f"{x:.17g},{u:.17g}\n")
    return buf.getvalue()


def write_csv(state: LatticeState, path, comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(to_csv(state, comment))


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0].strip() != "x,u":
        raise ValueError(f"{path}: missing 'x,u' header")
    rows = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return rows[:, 0], rows[:, 1]
