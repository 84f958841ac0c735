"""Event-driven simulation via the graphical construction.

Each site carries a rate-one Poisson clock and a sequence of Bernoulli(p)
coins drawn from its own counter-based stream (see :mod:`eastlab.rng`).
At a ring the site reads its constraint; if the ring is legal the spin is
reset to the coin.  Because the randomness of a site depends only on
``(seed, site)``, runs on nested regions and coupled copies share their
clock rings and coins exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Protocol, Sequence

import numpy as np

from . import _core, _lazy
from .errors import ConfigurationError, NonErgodicError
from .lattice import (
    Box,
    BoundaryCondition,
    ModelParams,
    Region,
    SpinConfig,
    geometry,
)
from .rng import (
    MASK64,
    TAG_DYNAMICS,
    TAG_INITIAL,
    _initial_uniforms,
    replicate_seeds,
    site_keys,
    stream_bases,
)

__all__ = [
    "BernoulliLaw",
    "BufferSpec",
    "CoupledRun",
    "MixtureLaw",
    "PatternLaw",
    "Trajectory",
    "buffer_width",
    "run",
    "run_buffered_infinite",
    "run_coupled",
    "sample_buffered",
]


class Observer(Protocol):
    def on_event(self, time: float, site: tuple, legal: bool, value: int) -> None: ...

    def on_finish(self, final: SpinConfig) -> None: ...


@dataclass
class Trajectory:
    """Record of the rings applied during one run.

    ``sites`` holds region indices (lexicographic order); ``values`` is the
    spin right after each ring, so it only differs from the previous value
    at legal rings.
    """

    initial: SpinConfig
    bc: BoundaryCondition | None
    params: ModelParams
    seed: int
    horizon: float
    times: np.ndarray
    sites: np.ndarray
    legal: np.ndarray
    coins: np.ndarray
    values: np.ndarray
    final: SpinConfig
    n_events: int
    stop_time: float | None = None

    @property
    def region(self) -> Region:
        return self.initial.region

    def __len__(self) -> int:
        return self.times.shape[0]

    def events(self) -> Iterator[tuple]:
        region = self.region
        for t, s, l, v in zip(self.times, self.sites, self.legal, self.values):
            yield float(t), region.site(int(s)), bool(l), int(v)

    def site_path(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Change points ``(times, values)`` of the spin at ``x``, starting at time 0."""
        i = self.region.index(tuple(x))
        mask = self.sites == i
        times = np.concatenate(([0.0], self.times[mask]))
        values = np.concatenate(([self.initial[x]], self.values[mask])).astype(np.int8)
        keep = np.concatenate(([True], values[1:] != values[:-1]))
        return times[keep], values[keep]

    def state_at(self, t: float) -> SpinConfig:
        values = self.initial.to_array().astype(np.int8)
        upto = np.searchsorted(self.times, t, side="right")
        # later rings overwrite earlier ones
        values[self.sites[:upto]] = self.values[:upto]
        return SpinConfig.from_array(self.region, values)

    def write_jsonl(self, fh) -> None:
        """One JSON object per ring: time, site, legal, value."""
        for t, site, legal, value in self.events():
            fh.write(json.dumps({"time": float(f"{t:.17g}"), "site": list(site),
                                 "legal": legal, "value": value}) + "\n")


def _check_bc(region: Region, bc: BoundaryCondition | None, allow_non_ergodic: bool) -> None:
    if bc is not None and bc.region != region:
        raise ConfigurationError("boundary condition belongs to a different region")
    if isinstance(region, Box) and not allow_non_ergodic:
        if bc is None or not bc.classification.ergodic:
            raise NonErgodicError("non-ergodic boundary condition; pass allow_non_ergodic=True")


def _seed64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & MASK64)


def _empty_record():
    return (np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int8),
            np.empty(0, dtype=np.int8), np.empty(0, dtype=np.int8))


def run(initial: SpinConfig, bc: BoundaryCondition | None, params: ModelParams, t_end: float,
        seed: int, observers: Sequence[Observer] = (), *, allow_non_ergodic: bool = False,
        stop_at=None, stop_value: int = 0, record: bool = True) -> Trajectory:
    """Simulate the process from ``initial`` up to ``t_end``.

    Parameters
    ----------
    stop_at : site, optional
        End the run at the first time this site holds ``stop_value``.
    observers : sequence
        Objects with ``on_event`` and ``on_finish`` methods.  They are fed
        every ring in chronological order and then the final state.

    Raises
    ------
    NonErgodicError
        If ``bc`` is not ergodic and ``allow_non_ergodic`` is false.
    """
    if t_end < 0:
        raise ConfigurationError("t_end must be non-negative")
    region = initial.region
    _check_bc(region, bc, allow_non_ergodic)
    geo = geometry(region)
    ext = geo.extended(initial, bc)
    bases = stream_bases(seed, geo.keys, TAG_DYNAMICS)
    stop_site = region.index(tuple(stop_at)) if stop_at is not None else _core.NO_STOP
    watch = np.ones(geo.n, dtype=np.int8)
    m, n_events, stop_time, rt, rs, rl, rc, rv = _core.simulate(
        ext, geo.down, bases, params.p, float(t_end), stop_site, stop_value, watch, record,
        *_empty_record())
    final = SpinConfig.from_array(region, ext[: geo.n])
    traj = Trajectory(initial.copy(), bc, params, int(seed), float(t_end) if stop_time < 0 else stop_time,
                      rt[:m].copy(), rs[:m].copy(), rl[:m].astype(bool), rc[:m].copy(), rv[:m].copy(),
                      final, int(n_events), None if stop_time < 0 else float(stop_time))
    if observers:
        for event in traj.events():
            for obs in observers:
                obs.on_event(*event)
        for obs in observers:
            obs.on_finish(final)
    return traj


@dataclass
class CoupledRun:
    finals: list
    coalescence_time: float
    violations: int
    n_events: int

    @property
    def coalesced(self) -> bool:
        return math.isfinite(self.coalescence_time)


def run_coupled(initials: Sequence[SpinConfig], bc: BoundaryCondition | None, params: ModelParams,
                t_end: float, seed: int, *, allow_non_ergodic: bool = False) -> CoupledRun:
    """Run several initial states on one shared set of clock rings and coins."""
    if not initials:
        raise ConfigurationError("need at least one initial configuration")
    region = initials[0].region
    if any(c.region != region for c in initials):
        raise ConfigurationError("coupled copies must share their region")
    _check_bc(region, bc, allow_non_ergodic)
    geo = geometry(region)
    exts = np.stack([geo.extended(c, bc) for c in initials])
    bases = stream_bases(seed, geo.keys, TAG_DYNAMICS)
    tc, violations, n_events = _core.simulate_coupled(exts, geo.down, bases, params.p, float(t_end))
    finals = [SpinConfig.from_array(region, row[: geo.n]) for row in exts]
    return CoupledRun(finals, float(tc), int(violations), int(n_events))


# ----------------------------------------------------------------------------
# buffered approximation of the infinite-volume process


def buffer_width(d: int, t: float, eps: float) -> int:
    """Smallest ``k`` with ``(d e t / k)^k <= eps`` (0 when ``t == 0``)."""
    if eps <= 0:
        raise ConfigurationError("buffer tolerance must be positive")
    if t < 0:
        raise ConfigurationError("time must be non-negative")
    if t == 0 or eps >= 1:
        return 0
    rate = d * math.e * t
    k = max(1, math.ceil(rate))
    log_eps = math.log(eps)
    while k * (math.log(rate) - math.log(k)) > log_eps:
        k += 1
    return k


@dataclass(frozen=True)
class BufferSpec:
    window: Box
    horizon: float
    eps: float
    width: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "width", buffer_width(self.window.dim, self.horizon, self.eps))

    @property
    def padded(self) -> Box:
        k = self.width
        return Box(tuple(a - k for a in self.window.lo), self.window.hi)


@dataclass(frozen=True)
class BernoulliLaw:
    """Product law with ``P(spin = 1) = rho`` at every site."""

    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigurationError("rho must lie in [0, 1]")

    def resolve(self, seed: int) -> "BernoulliLaw":
        return self

    def sample(self, coords: np.ndarray, seed: int) -> np.ndarray:
        u = _initial_uniforms(stream_bases(seed, site_keys(coords), TAG_INITIAL))
        return (u < self.rho).astype(np.int8)


@dataclass(frozen=True)
class PatternLaw:
    """Deterministic initial state given by ``fn(coords) -> 0/1 array``."""

    fn: object
    name: str = "pattern"

    def resolve(self, seed: int) -> "PatternLaw":
        return self

    def sample(self, coords: np.ndarray, seed: int) -> np.ndarray:
        return np.asarray(self.fn(coords), dtype=np.int8).reshape(-1)


@dataclass(frozen=True)
class MixtureLaw:
    """Pick one component per replicate (keyed by the seed), then sample it."""

    components: tuple
    weights: tuple

    def resolve(self, seed: int):
        u = (int(replicate_seeds(seed, 1)[0]) >> 11) / 2.0**53
        cum = np.cumsum(np.asarray(self.weights, dtype=float) / sum(self.weights))
        return self.components[int(np.searchsorted(cum, u, side="right").clip(0, len(cum) - 1))]

    def sample(self, coords: np.ndarray, seed: int) -> np.ndarray:
        return self.resolve(seed).sample(coords, seed)


def sample_buffered(window: Box, law, params: ModelParams, times: Sequence[float], eps: float,
                    seed: int, *, width: int | None = None, method: str = "auto") -> np.ndarray:
    """Window spins at each of ``times`` for the buffered infinite-volume process.

    The window is padded by ``width`` sites (default: :func:`buffer_width`
    at the largest time) in every negative coordinate direction; sites
    below the padded box are frozen at their initial values.  ``method``
    selects a forward event-driven run of the padded box or the lazy
    backward evaluator (``"lazy"``); both give identical results.

    Returns an ``(len(times), window.size)`` int8 array.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    if np.any(times < 0):
        raise ConfigurationError("times must be non-negative")
    t_max = float(times.max()) if times.size else 0.0
    k = buffer_width(window.dim, t_max, eps) if width is None else int(width)
    padded = Box(tuple(a - k for a in window.lo), window.hi)
    law = law.resolve(seed)
    if method == "auto":
        method = "lazy" if isinstance(law, BernoulliLaw) else "forward"
    if method == "lazy":
        if not isinstance(law, BernoulliLaw):
            raise ConfigurationError("lazy evaluation needs a Bernoulli initial law")
        values, _ = _lazy.lazy_values(
            np.asarray(padded.lo, dtype=np.int64), np.asarray(padded.shape, dtype=np.int64),
            _seed64(seed), params.p, law.rho, t_max, window.coords(), times)
        return values
    if method != "forward":
        raise ConfigurationError(f"unknown method {method!r}")
    geo = geometry(padded)
    ext = np.empty(geo.n + len(geo.boundary), dtype=np.int8)
    ext[: geo.n] = law.sample(geo.coords, seed)
    if geo.boundary:
        ext[geo.n :] = law.sample(np.asarray(geo.boundary, dtype=np.int64), seed)
    win_idx = np.array([padded.index(y) for y in window.sites()], dtype=np.int64)
    watch = np.zeros(geo.n, dtype=np.int8)
    watch[win_idx] = 1
    initial = ext[win_idx].copy()
    bases = stream_bases(seed, geo.keys, TAG_DYNAMICS)
    m, _, _, rt, rs, rl, rc, rv = _core.simulate(
        ext, geo.down, bases, params.p, t_max, _core.NO_STOP, 0, watch, True, *_empty_record())
    rt, rs, rv = rt[:m], rs[:m], rv[:m]
    position = np.full(geo.n, -1, dtype=np.int64)
    position[win_idx] = np.arange(win_idx.size)
    out = np.empty((times.size, window.size), dtype=np.int8)
    for row, t in enumerate(times):
        state = initial.copy()
        upto = np.searchsorted(rt, t, side="right")
        state[position[rs[:upto]]] = rv[:upto]
        out[row] = state
    return out


def run_buffered_infinite(window: Box, law, params: ModelParams, t_end: float, eps: float,
                          seed: int, *, width: int | None = None, method: str = "auto") -> SpinConfig:
    """Approximate sample of the infinite-volume process restricted to ``window`` at ``t_end``."""
    values = sample_buffered(window, law, params, [t_end], eps, seed, width=width, method=method)
    return SpinConfig.from_array(window, values[0])
