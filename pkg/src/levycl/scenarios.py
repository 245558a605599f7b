"""Initial data, exact solutions and scenario bundles.

Everything here is a small frozen dataclass so that scenarios can be pickled
into worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameterError
from .flux import make_flux
from .grid import Boundary, Grid1D
from .noise import LevyMeasureSpec, linear_diffusion, linear_jump
from .solver import SchemeConfig

__all__ = [
    "Box",
    "Riemann",
    "Gaussian",
    "Constant",
    "make_initial",
    "Translation",
    "BurgersRiemann",
    "exact_solution",
    "Scenario",
    "default_scenario",
]


# --------------------------------------------------------------- initial data

@dataclass(frozen=True)
class Box:
    lo: float
    hi: float
    height: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where((x >= self.lo) & (x < self.hi), self.height, 0.0)

    def breakpoints(self):
        return (self.lo, self.hi)


@dataclass(frozen=True)
class Riemann:
    left: float
    right: float
    x0: float = 0.0

    def __call__(self, x):
        return np.where(np.asarray(x, dtype=np.float64) < self.x0, self.left, self.right)

    def breakpoints(self):
        return (self.x0,)


@dataclass(frozen=True)
class Gaussian:
    center: float
    width: float
    height: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.height * np.exp(-0.5 * ((x - self.center) / self.width) ** 2)

    def breakpoints(self):
        return ()


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=np.float64), self.value)

    def breakpoints(self):
        return ()


_INITIAL = {"box": Box, "riemann": Riemann, "gaussian": Gaussian, "constant": Constant}


def make_initial(kind: str, **params):
    try:
        return _INITIAL[kind](**params)
    except KeyError:
        raise InvalidParameterError(f"unknown initial data kind {kind!r}") from None


# ------------------------------------------------------------- exact solutions

@dataclass(frozen=True)
class Translation:
    """Linear advection ``u(t, x) = u0(x - c t)``."""

    u0: Callable
    c: float

    def __call__(self, t, x):
        return self.u0(np.asarray(x, dtype=np.float64) - self.c * t)

    def breakpoints(self, t):
        return tuple(b + self.c * t for b in self.u0.breakpoints())


@dataclass(frozen=True)
class BurgersRiemann:
    """Entropy solution of Burgers' equation for Riemann data."""

    left: float
    right: float
    x0: float = 0.0

    def __call__(self, t, x):
        x = np.asarray(x, dtype=np.float64)
        if t <= 0:
            return np.where(x < self.x0, self.left, self.right)
        if self.left > self.right:
            s = 0.5 * (self.left + self.right)
            return np.where(x < self.x0 + s * t, self.left, self.right)
        xi = (x - self.x0) / t
        return np.clip(xi, self.left, self.right)

    def breakpoints(self, t):
        if self.left > self.right:
            return (self.x0 + 0.5 * (self.left + self.right) * t,)
        return (self.x0 + self.left * t, self.x0 + self.right * t)

    @property
    def u0(self):
        return Riemann(self.left, self.right, self.x0)


@dataclass(frozen=True)
class ExactCase:
    """A registered deterministic problem with a known solution."""

    label: str
    flux_label: str
    flux_params: dict
    solution: object
    x_min: float
    x_max: float
    boundary: Boundary
    T: float

    @property
    def u0(self):
        return self.solution.u0


def _cases():
    square = Box(0.25, 0.75)
    return {
        "square_wave": ExactCase("square_wave", "linear", {"c": 1.0},
                                 Translation(square, 1.0), 0.0, 2.0, Boundary.ZERO, 0.5),
        "smooth_translation": ExactCase("smooth_translation", "linear", {"c": 1.0},
                                        Translation(Gaussian(0.6, 0.1), 1.0), 0.0, 2.0,
                                        Boundary.ZERO, 0.5),
        "burgers_shock": ExactCase("burgers_shock", "burgers", {"u_bound": 1.0},
                                   BurgersRiemann(1.0, 0.0), -1.0, 2.0,
                                   Boundary.EXTRAPOLATE, 0.5),
        "burgers_rarefaction": ExactCase("burgers_rarefaction", "burgers", {"u_bound": 1.0},
                                         BurgersRiemann(-1.0, 1.0), -1.0, 2.0,
                                         Boundary.EXTRAPOLATE, 0.5),
    }


def exact_solution(label: str) -> ExactCase:
    cases = _cases()
    if label not in cases:
        raise InvalidParameterError(
            f"unknown exact solution {label!r}; choose from {sorted(cases)}")
    return cases[label]


# ------------------------------------------------------------------ scenarios

@dataclass(frozen=True)
class Scenario:
    config: SchemeConfig
    u0: Callable
    x_min: float
    x_max: float
    boundary: Boundary = Boundary.ZERO

    def grid(self, n_cells: int) -> Grid1D:
        return Grid1D(self.x_min, self.x_max, n_cells, self.boundary)


def default_scenario(record_times: Optional[tuple] = (0.5,)) -> Scenario:
    """Burgers with a unit box, ``sigma = 0.2 u``, one unit atom, ``eta = 0.3 u min(|z|, 1)``."""
    cfg = SchemeConfig(
        flux=make_flux("burgers", u_bound=2.0),
        T=0.5,
        cfl=0.5,
        sigma=linear_diffusion(0.2, 4.0),
        eta=linear_jump(0.3, 4.0),
        levy=LevyMeasureSpec(((1.0, 1.0),)),
        record_times=record_times,
    )
    return Scenario(cfg, Box(0.5, 1.0), 0.0, 2.0, Boundary.ZERO)
