"""Validated experiment configuration read from flat YAML files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError

__all__ = ["EXPERIMENTS", "ExperimentConfig", "load_config"]

EXPERIMENTS = (
    "trace-law",
    "vacancy-bound",
    "persistence-tail",
    "mixing-scaling",
    "density-relaxation",
    "good-set",
)

BC_NAMES = ("minimal", "maximal")

EXECUTION_KEYS = ("out", "threads")

# per-experiment defaults; keys absent here fall back to the dataclass defaults
DEFAULTS: dict[str, dict[str, Any]] = {
    "trace-law": dict(d=2, q=[0.3, 0.5], n=[1, 2, 3], times=[3.0], initial="pi",
                      replicates=2_000_000, target_kept=50_000),
    "vacancy-bound": dict(d=2, q=[0.3, 0.5], x=[[1, 1], [2, 2]], times=[1.0, 5.0, 25.0],
                          initial="ones", replicates=100_000),
    "persistence-tail": dict(d=2, q=[0.3], x=[[5, 5]], horizon=1000.0, replicates=10_000,
                             times=[10.0, 20.0, 40.0, 80.0, 160.0], delta=0.1,
                             scaling_x=[5, 10, 20], scaling_q=0.5, scaling_replicates=10_000,
                             ratio_window=[1.5, 2.5], initial="ones"),
    "mixing-scaling": dict(d=1, q=[0.5], L=[2, 3, 4, 5, 6, 7, 8, 9, 10], mc_d=2,
                           mc_L=[8, 16, 32, 64], replicates=200, horizon=100_000.0,
                           ratio_bound=1.6, ratio_window=[1.6, 2.4], min_r2=0.99),
    "density-relaxation": dict(d=2, q=[0.5], rho=[0.5], times=[1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
                               replicates=2000),
    "good-set": dict(d=1, q=[0.5], L=[64], M=[0.5, 1.0, 2.0, 4.0, 8.0], replicates=2000,
                     initial="ones", max_outside=0.05),
}


def _float(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{key}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigurationError(f"{key}: must be finite")
    return value


def _int(key, value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
    return int(value)


def _list(key, value, conv):
    if not isinstance(value, (list, tuple)):
        value = [value]
    if not value:
        raise ConfigurationError(f"{key}: must not be empty")
    return [conv(key, v) for v in value]


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment run.

    List-valued keys accept a scalar for a one-element list.  Sites ``x``
    are lists of ``d`` integers; in one dimension a bare integer is a site.
    """

    experiment: str
    d: int = 1
    q: list = field(default_factory=lambda: [0.5])
    L: list | None = None
    x: list | None = None
    bc: str = "minimal"
    times: list | None = None
    horizon: float | None = None
    replicates: int = 1000
    seed: int = 0
    out: str = "results"
    significance: float = 0.001
    buffer_eps: float = 1e-9
    threads: int = 1
    n: list | None = None
    rho: list | None = None
    initial: str = "ones"
    M: list | None = None
    run_length: int | None = None
    log_base: float = math.e
    max_outside: float = 0.05
    delta: float = 0.1
    scaling_x: list | None = None
    scaling_q: float = 0.5
    scaling_replicates: int = 10_000
    ratio_window: list | None = None
    ratio_bound: float = 1.6
    ratio_from: int | None = None
    mc_d: int = 2
    mc_L: list | None = None
    min_r2: float = 0.99
    target_kept: int | None = None
    min_kept: int = 500
    n_boot: int = 1000
    ci_level: float = 0.99

    @classmethod
    def from_dict(cls, data: dict, experiment: str | None = None) -> "ExperimentConfig":
        """Build and validate a config; unknown keys are rejected."""
        data = dict(data or {})
        name = data.pop("experiment", None) or experiment
        if experiment is not None and name != experiment:
            raise ConfigurationError(f"config is for {name!r}, not {experiment!r}")
        if name not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
        known = {f.name for f in fields(cls)} - {"experiment"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        merged = dict(DEFAULTS[name])
        merged.update(data)
        return cls(experiment=name, **merged)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        d = _int("d", self.d)
        if d < 1:
            raise ConfigurationError("d must be at least 1")
        set_("mc_d", _int("mc_d", self.mc_d))
        qs = _list("q", self.q, _float)
        if any(not 0 < q < 1 for q in qs):
            raise ConfigurationError("q must lie strictly between 0 and 1")
        set_("q", qs)
        if self.L is not None:
            Ls = _list("L", self.L, _int)
            if any(L < 1 for L in Ls):
                raise ConfigurationError("L must be positive")
            set_("L", Ls)
        if self.mc_L is not None:
            set_("mc_L", _list("mc_L", self.mc_L, _int))
        if self.x is not None:
            set_("x", self._sites("x", self.x, d))
        if self.scaling_x is not None:
            set_("scaling_x", self._sites("scaling_x", self.scaling_x, 1))
        if self.bc not in BC_NAMES:
            raise ConfigurationError(f"bc must be one of {BC_NAMES}")
        if self.initial not in ("ones", "zeros", "pi"):
            raise ConfigurationError("initial must be 'ones', 'zeros' or 'pi'")
        for key in ("times", "M", "rho"):
            value = getattr(self, key)
            if value is not None:
                vals = _list(key, value, _float)
                if any(v < 0 for v in vals):
                    raise ConfigurationError(f"{key} must be non-negative")
                if key != "rho" and vals != sorted(vals):
                    raise ConfigurationError(f"{key} must be sorted")
                set_(key, vals)
        if self.rho is not None and any(r > 1 for r in self.rho):
            raise ConfigurationError("rho must lie in [0, 1]")
        if self.n is not None:
            ns = _list("n", self.n, _int)
            if any(n < 1 for n in ns):
                raise ConfigurationError("n must be at least 1")
            set_("n", ns)
        if self.horizon is not None and _float("horizon", self.horizon) <= 0:
            raise ConfigurationError("horizon must be positive")
        for key in ("replicates", "scaling_replicates", "threads", "n_boot", "min_kept"):
            if _int(key, getattr(self, key)) < 1:
                raise ConfigurationError(f"{key} must be at least 1")
        if self.target_kept is not None and _int("target_kept", self.target_kept) < 1:
            raise ConfigurationError("target_kept must be at least 1")
        if self.run_length is not None and _int("run_length", self.run_length) < 0:
            raise ConfigurationError("run_length must be non-negative")
        if self.ratio_from is not None:
            _int("ratio_from", self.ratio_from)
        _int("seed", self.seed)
        for key, lo, hi in (("significance", 0, 1), ("ci_level", 0, 1), ("max_outside", 0, 1),
                            ("delta", 0, 1), ("scaling_q", 0, 1)):
            v = _float(key, getattr(self, key))
            if not lo < v < hi:
                raise ConfigurationError(f"{key} must lie in ({lo}, {hi})")
        if _float("buffer_eps", self.buffer_eps) <= 0:
            raise ConfigurationError("buffer_eps must be positive")
        if _float("log_base", self.log_base) <= 1:
            raise ConfigurationError("log_base must exceed 1")
        if _float("ratio_bound", self.ratio_bound) < 1:
            raise ConfigurationError("ratio_bound must be at least 1")
        _float("min_r2", self.min_r2)
        if self.ratio_window is not None:
            w = _list("ratio_window", self.ratio_window, _float)
            if len(w) != 2 or w[0] > w[1]:
                raise ConfigurationError("ratio_window must be [low, high]")
            set_("ratio_window", w)
        if not isinstance(self.out, str):
            raise ConfigurationError("out must be a path string")

    @staticmethod
    def _sites(key, value, d):
        if not isinstance(value, (list, tuple)):
            value = [value]
        if d == 1 and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            value = [[v] for v in value]
        elif all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            value = [value]
        sites = []
        for v in value:
            site = tuple(_list(key, v, _int))
            if len(site) != d:
                raise ConfigurationError(f"{key}: site {site} does not have {d} coordinates")
            if any(c < 0 for c in site):
                raise ConfigurationError(f"{key}: site {site} must have non-negative coordinates")
            sites.append(site)
        return sites

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        """Copy with some keys replaced (``None`` values are ignored)."""
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def as_dict(self, *, execution: bool = False) -> dict:
        """Config keys as plain data; ``out`` and ``threads`` only with ``execution``.

        Execution settings never change results, so reports leave them out.
        """
        out = {}
        for f in fields(self):
            if f.name in EXECUTION_KEYS and not execution:
                continue
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = [list(e) if isinstance(e, tuple) else e for e in v]
            out[f.name] = v
        return out


def load_config(path: str | Path, experiment: str | None = None) -> ExperimentConfig:
    """Read a flat YAML mapping of config keys."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping of keys to values")
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigurationError(f"{key}: nested mappings are not allowed (flat config)")
    return ExperimentConfig.from_dict(data, experiment)
