"""Run configuration: a YAML key-value tree mapped onto dataclasses."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import yaml

from .errors import ConfigError, LevyclError
from .flux import flux_labels, make_flux
from .grid import Boundary
from .noise import LevyMeasureSpec, StableLikeDensity, linear_diffusion, linear_jump
from .scenarios import Scenario, make_initial
from .solver import SchemeConfig

__all__ = [
    "ScenarioSpec",
    "SolverSpec",
    "StudySpec",
    "DiagnosticsSpec",
    "OutputSpec",
    "RunConfig",
    "load_config",
    "parse_config",
    "dump_config",
    "build_scenario",
]


def _tuplify(x):
    if isinstance(x, (list, tuple)):
        return tuple(_tuplify(v) for v in x)
    if isinstance(x, dict):
        return {k: _tuplify(v) for k, v in x.items()}
    return x


def _listify(x):
    if isinstance(x, (list, tuple)):
        return [_listify(v) for v in x]
    if isinstance(x, dict):
        return {k: _listify(v) for k, v in x.items()}
    return x


@dataclass(frozen=True)
class ScenarioSpec:
    flux: dict = field(default_factory=lambda: {"label": "burgers", "u_bound": 2.0})
    u0: dict = field(default_factory=lambda: {"kind": "box", "lo": 0.5, "hi": 1.0, "height": 1.0})
    domain: tuple = (0.0, 2.0)
    boundary: str = "zero"
    sigma: Optional[dict] = field(default_factory=lambda: {"kind": "linear", "a": 0.2, "M": 4.0})
    eta: Optional[dict] = field(default_factory=lambda: {"kind": "linear", "b": 0.3, "M": 4.0})
    levy: dict = field(default_factory=lambda: {"atoms": ((1.0, 1.0),), "density": None,
                                                "truncation_eps": 0.0})


@dataclass(frozen=True)
class SolverSpec:
    T: float = 0.5
    cfl: float = 0.5
    n_cells: int = 256
    # null records every step
    record_times: Optional[tuple] = (0.5,)
    jump_adapted: bool = False
    numerical_flux: str = "eo"


@dataclass(frozen=True)
class StudySpec:
    resolutions: tuple = (128, 256, 512, 1024, 2048)
    n_paths: int = 200
    reference_factor: int = 4
    seed_base: int = 0
    n_boot: int = 1000


@dataclass(frozen=True)
class DiagnosticsSpec:
    n_cells: int = 128
    n_paths: int = 200
    xis: tuple = (0.05, 0.1)
    n_levels: int = 5
    moment_ps: tuple = (1, 2, 4)
    K: tuple = (0.0, 2.0)
    tolerance_sigmas: float = 3.0
    max_violation_rate: float = 0.01
    linf_slack: float = 0.05
    max_fit_residual: float = 0.2


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    formats: tuple = ("json", "csv")


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    study: StudySpec = field(default_factory=StudySpec)
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def to_dict(self) -> dict:
        return _listify(asdict(self))


_SECTIONS = {"scenario": ScenarioSpec, "solver": SolverSpec, "study": StudySpec,
             "diagnostics": DiagnosticsSpec, "output": OutputSpec}


def parse_config(data: Optional[dict]) -> RunConfig:
    data = data or {}
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigError(name, "must be a mapping")
        known = {f.name for f in fields(cls)}
        bad = set(section) - known
        if bad:
            raise ConfigError(f"{name}.{sorted(bad)[0]}", "unknown key")
        kwargs[name] = cls(**{k: _tuplify(v) for k, v in section.items()})
    rc = RunConfig(**kwargs)
    validate(rc)
    return rc


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"invalid YAML: {exc}") from None
    return parse_config(data)


def dump_config(rc: RunConfig) -> str:
    return yaml.safe_dump(rc.to_dict(), sort_keys=False)


def _is_pow2(n) -> bool:
    return isinstance(n, int) and n > 0 and n & (n - 1) == 0


def validate(rc: RunConfig) -> None:
    sc = rc.scenario
    label = sc.flux.get("label")
    if label not in flux_labels():
        raise ConfigError("scenario.flux.label", f"unknown flux {label!r}")
    if sc.u0.get("kind") not in ("box", "riemann", "gaussian", "constant"):
        raise ConfigError("scenario.u0.kind", f"unknown initial data {sc.u0.get('kind')!r}")
    try:
        Boundary(sc.boundary)
    except ValueError:
        raise ConfigError("scenario.boundary", f"unknown boundary {sc.boundary!r}") from None
    if len(sc.domain) != 2 or not sc.domain[1] > sc.domain[0]:
        raise ConfigError("scenario.domain", "must be [x_min, x_max] with x_min < x_max")
    if sc.sigma is not None:
        if sc.sigma.get("kind") != "linear":
            raise ConfigError("scenario.sigma.kind", "only 'linear' is built in")
        if not sc.sigma.get("M", 0) > 0:
            raise ConfigError("scenario.sigma.M", "cutoff_M must be positive")
    if sc.eta is not None:
        if sc.eta.get("kind") != "linear":
            raise ConfigError("scenario.eta.kind", "only 'linear' is built in")
        if not 0 < abs(sc.eta.get("b", 0)) < 1:
            raise ConfigError("scenario.eta.b", "lambda_star = |b| must lie in (0, 1)")
        if not sc.eta.get("M", 0) > 0:
            raise ConfigError("scenario.eta.M", "cutoff_M must be positive")
    dens = sc.levy.get("density")
    if dens is not None and dens.get("kind") != "stable":
        raise ConfigError("scenario.levy.density.kind", "only 'stable' densities are built in")
    for n in rc.study.resolutions:
        if not _is_pow2(n):
            raise ConfigError("study.resolutions", f"{n} is not a power of two")
    if rc.study.reference_factor < 4 or not _is_pow2(rc.study.reference_factor):
        raise ConfigError("study.reference_factor", "must be a power of two >= 4")
    if rc.solver.n_cells < 2:
        raise ConfigError("solver.n_cells", "must be >= 2")
    if rc.solver.numerical_flux not in ("eo", "rusanov"):
        raise ConfigError("solver.numerical_flux", "must be 'eo' or 'rusanov'")
    try:
        build_scenario(rc)
    except ConfigError:
        raise
    except (LevyclError, TypeError, ValueError) as exc:
        raise ConfigError("scenario", str(exc)) from None


def build_scenario(rc: RunConfig, record_times="config") -> Scenario:
    sc, sv = rc.scenario, rc.solver
    fparams = {k: v for k, v in sc.flux.items() if k != "label"}
    flux = make_flux(sc.flux["label"], **fparams)
    sigma = linear_diffusion(sc.sigma["a"], sc.sigma["M"]) if sc.sigma else None
    eta = linear_jump(sc.eta["b"], sc.eta["M"]) if sc.eta else None
    dens = sc.levy.get("density")
    density = StableLikeDensity(dens["c"], dens["alpha"]) if dens else None
    levy = LevyMeasureSpec(tuple(tuple(a) for a in sc.levy.get("atoms", ())), density,
                           float(sc.levy.get("truncation_eps", 0.0)))
    rt = sv.record_times if record_times == "config" else record_times
    cfg = SchemeConfig(flux=flux, T=sv.T, cfl=sv.cfl, sigma=sigma, eta=eta, levy=levy,
                       record_times=rt, jump_adapted=sv.jump_adapted,
                       numerical_flux=sv.numerical_flux)
    u0p = {k: v for k, v in sc.u0.items() if k != "kind"}
    return Scenario(cfg, make_initial(sc.u0["kind"], **u0p), float(sc.domain[0]),
                    float(sc.domain[1]), Boundary(sc.boundary))
