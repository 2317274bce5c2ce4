"""Run configuration: one self-describing JSON document per run."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError
from .experiments import Thresholds

KINDS = (
    "original",
    "rescaled",
    "stationary",
    "spectrum",
    "bubbles-sweep",
    "fit-rate",
    "blowup-demo",
    "verify-inequalities",
)
INITIAL_TYPES = ("generic", "stationary", "perturbed-stationary", "bubble", "separable")


@dataclass
class GridConfig:
    R: float = 1.0
    N: int = 256
    stretch: float = 0.0


@dataclass
class InitialConfig:
    type: str = "generic"
    amplitude: float = 8.0
    lam: float = 4.0
    perturbation: float = 0.3
    T_star: float = 1.0


@dataclass
class RunConfig:
    kind: str = "rescaled"
    n: int = 4
    p: float | None = None
    b: float | None = None
    b_frac: float | None = 0.3
    grid: GridConfig = field(default_factory=GridConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    t_end: float = 40.0
    sample_dt: float = 0.5
    dt_init: float = 1e-3
    dt_max: float = 0.1
    dt_min: float = 1e-12
    newton_tol: float = 1e-12
    mass_floor: float = 1e-8
    renormalize: bool = True
    spectrum_K: int = 12
    sweep_lams: list[float] = field(default_factory=lambda: [10.0, 100.0, 1000.0])
    series: str | None = None
    fit_window: float = 0.4
    fit_t_min: float = 5.0
    seed: int = 0
    out: str = "out"
    thresholds: Thresholds = field(default_factory=Thresholds)

    @property
    def exponent(self) -> float:
        if self.p is not None:
            return float(self.p)
        return (self.n + 2) / (self.n - 2)

    def to_json(self) -> dict:
        return asdict(self)


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigurationError("expected an object", prefix.rstrip("."))
    names = {f.name: f for f in fields(cls)}
    kw = {}
    for key, val in data.items():
        if key not in names:
            raise ConfigurationError("unknown field", prefix + key)
        kw[key] = val
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigurationError(str(exc), prefix.rstrip(".") or cls.__name__) from exc


def _num(value, name, *, positive=False, integer=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"must be a number, got {value!r}", name)
    if not math.isfinite(value):
        raise ConfigurationError("must be finite", name)
    if integer and int(value) != value:
        raise ConfigurationError("must be an integer", name)
    if positive and not value > 0:
        raise ConfigurationError("must be positive", name)
    if nonneg and value < 0:
        raise ConfigurationError("must be >= 0", name)
    return value


def validate(cfg: RunConfig) -> RunConfig:
    """Static checks; b < lambda_1 is checked against the grid when the run is set up."""
    if cfg.kind not in KINDS:
        raise ConfigurationError(f"must be one of {', '.join(KINDS)}", "kind")
    _num(cfg.n, "n", positive=True, integer=True)
    if cfg.p is None and cfg.n < 3:
        raise ConfigurationError("critical exponent needs n >= 3; give p explicitly", "p")
    if cfg.p is not None and not _num(cfg.p, "p") > 1:
        raise ConfigurationError("must exceed 1", "p")
    if cfg.b is not None:
        _num(cfg.b, "b", nonneg=True)
    if cfg.b_frac is not None:
        _num(cfg.b_frac, "b_frac", nonneg=True)
        if cfg.b_frac >= 1:
            raise ConfigurationError("must be below 1 (b must stay below lambda_1)", "b_frac")
    _num(cfg.grid.R, "grid.R", positive=True)
    _num(cfg.grid.N, "grid.N", positive=True, integer=True)
    if cfg.grid.N < 16:
        raise ConfigurationError("need at least 16 intervals", "grid.N")
    _num(cfg.grid.stretch, "grid.stretch")
    if cfg.initial.type not in INITIAL_TYPES:
        raise ConfigurationError(f"must be one of {', '.join(INITIAL_TYPES)}", "initial.type")
    _num(cfg.initial.amplitude, "initial.amplitude", positive=True)
    _num(cfg.initial.lam, "initial.lam", positive=True)
    _num(cfg.initial.T_star, "initial.T_star", positive=True)
    _num(cfg.t_end, "t_end", nonneg=True)
    _num(cfg.sample_dt, "sample_dt", positive=True)
    for name in ("dt_init", "dt_max", "dt_min", "newton_tol", "mass_floor"):
        _num(getattr(cfg, name), name, positive=True)
    if not cfg.dt_min <= cfg.dt_init <= cfg.dt_max:
        raise ConfigurationError("need dt_min <= dt_init <= dt_max", "dt_init")
    _num(cfg.spectrum_K, "spectrum_K", positive=True, integer=True)
    for k, lam in enumerate(cfg.sweep_lams):
        _num(lam, f"sweep_lams[{k}]", positive=True)
    _num(cfg.seed, "seed", integer=True, nonneg=True)
    if cfg.kind == "fit-rate" and not cfg.series:
        raise ConfigurationError("fit-rate needs a CSV path with columns t,value", "series")
    return cfg


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    grid = _build(GridConfig, data.pop("grid", {}), "grid.")
    init = _build(InitialConfig, data.pop("initial", {}), "initial.")
    th_data = data.pop("thresholds", {})
    if "dissipation_ratio" in th_data:
        th_data = dict(th_data, dissipation_ratio=tuple(th_data["dissipation_ratio"]))
    th = _build(Thresholds, th_data, "thresholds.")
    cfg = _build(RunConfig, data, "")
    cfg.grid, cfg.initial, cfg.thresholds = grid, init, th
    return validate(cfg)


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc}", str(path)) from exc
    return config_from_dict(data)
