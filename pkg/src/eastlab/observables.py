"""Scalar and event observables of trajectories and configurations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .engine import Trajectory
from .errors import ConfigurationError, DomainError
from .lattice import Box, SpinConfig, down_box, window
from .serialize import write_csv

__all__ = [
    "GoodEvent",
    "HatOmegaCheck",
    "PersistenceSample",
    "all_ones_box",
    "event_G",
    "front_position",
    "hat_omega_check",
    "hat_omega_length",
    "in_hat_omega",
    "longest_axis_run",
    "occupation_time",
    "persistence_time",
    "write_observable_csv",
]


def _horizon_check(trajectory: Trajectory, t: float | None) -> float:
    if t is None:
        return trajectory.horizon
    if t < 0 or t > trajectory.horizon * (1 + 1e-12):
        raise ConfigurationError(f"time {t} outside [0, {trajectory.horizon}]")
    return float(t)


def occupation_time(trajectory: Trajectory, x, t: float | None = None) -> float:
    """Total time in ``[0, t]`` during which the spin at ``x`` is 0.

    Summed with :func:`math.fsum` over the piecewise-constant path.
    """
    t = _horizon_check(trajectory, t)
    times, values = trajectory.site_path(x)
    ends = np.append(times[1:], np.inf)
    pieces = [min(end, t) - start for start, end, v in zip(times, ends, values)
              if v == 0 and start < t]
    return math.fsum(pieces)


@dataclass(frozen=True)
class PersistenceSample:
    """First time the spin at ``site`` is 0; ``censored`` if it never was by the horizon."""

    site: tuple
    time: float
    censored: bool


def persistence_time(trajectory: Trajectory, x) -> PersistenceSample:
    """Persistence time of the spin at ``x`` (0 when initially vacant)."""
    times, values = trajectory.site_path(x)
    zeros = np.flatnonzero(values == 0)
    x = tuple(int(c) for c in x)
    if zeros.size == 0:
        return PersistenceSample(x, trajectory.horizon, True)
    return PersistenceSample(x, float(times[zeros[0]]), False)


@dataclass(frozen=True)
class GoodEvent:
    occurred: bool
    xi: tuple | None


def event_G(trajectory: Trajectory, ell: int, t: float | None = None, origin=None) -> GoodEvent:
    """Whether some site of the window ``origin + [-ell+1, 0]^d`` spent time ``>= t / ell^d`` at 0.

    ``xi`` is the lexicographically smallest such site.
    """
    t = _horizon_check(trajectory, t)
    region = trajectory.region
    win = window(ell, region.dim, origin)
    threshold = t / ell**region.dim
    for x in win.sites():
        if x not in region:
            raise ConfigurationError(f"window site {x} lies outside the simulated region")
        if occupation_time(trajectory, x, t) >= threshold:
            return GoodEvent(True, x)
    return GoodEvent(False, None)


def hat_omega_length(L: int, log_base: float = math.e) -> int:
    """Run length ``floor(log(L)^2)`` above which a box is considered too filled."""
    if L < 1:
        raise ConfigurationError("L must be positive")
    return int(math.floor((math.log(L) / math.log(log_base)) ** 2))


def longest_axis_run(config: SpinConfig) -> int:
    """Longest run of consecutive ones along any coordinate axis of a box configuration."""
    region = config.region
    if not isinstance(region, Box):
        raise ConfigurationError("axis runs are defined on boxes only")
    grid = config.as_grid().astype(np.int64)
    best = 0
    for axis in range(grid.ndim):
        g = np.moveaxis(grid, axis, 0)
        run = np.zeros(g.shape[1:], dtype=np.int64)
        for layer in g:
            run = (run + 1) * layer
            best = max(best, int(run.max(initial=0)))
    return best


@dataclass(frozen=True)
class HatOmegaCheck:
    inside: bool
    run_length: int
    longest_run: int
    vacuous: bool


def hat_omega_check(config: SpinConfig, length: int | None = None,
                    log_base: float = math.e) -> HatOmegaCheck:
    """Check that every axis-parallel interval of ``length`` sites holds a vacancy.

    ``length`` defaults to :func:`hat_omega_length` of the box's largest
    side.  A length below 1 makes the condition vacuous; this is flagged.
    """
    region = config.region
    if not isinstance(region, Box):
        raise ConfigurationError("the good set is defined on boxes only")
    if length is None:
        L = max(region.shape)
        if L < 2:
            raise ConfigurationError("L must be at least 2")
        length = hat_omega_length(L, log_base)
    longest = longest_axis_run(config)
    if length < 1:
        return HatOmegaCheck(True, int(length), longest, True)
    return HatOmegaCheck(longest < length, int(length), longest, False)


def in_hat_omega(config: SpinConfig, length: int | None = None, log_base: float = math.e) -> bool:
    """True iff no axis run of ``length`` consecutive ones exists."""
    return hat_omega_check(config, length, log_base).inside


def all_ones_box(config: SpinConfig, x) -> bool:
    """True iff every spin in ``prod [0, x_i]`` is 1."""
    lam = down_box(x)
    region = config.region
    if isinstance(region, Box):
        if any(a > 0 for a in region.lo) or any(b < c for b, c in zip(region.hi, lam.hi)):
            raise ConfigurationError(f"box {lam} is not inside the region")
        grid = config.as_grid()
        sl = tuple(slice(0 - a, c - a + 1) for a, c in zip(region.lo, lam.hi))
        return bool(np.all(grid[sl] == 1))
    for y in lam.sites():
        if y not in region:
            raise ConfigurationError(f"site {y} is not inside the region")
    return all(config[y] == 1 for y in lam.sites())


def front_position(config: SpinConfig) -> int | None:
    """Largest coordinate of a vacancy (one-dimensional configurations only)."""
    region = config.region
    if region.dim != 1:
        raise DomainError("the front is defined in one dimension only")
    values = config.to_array()
    zeros = np.flatnonzero(values == 0)
    if zeros.size == 0:
        return None
    return int(region.site(int(zeros[-1]))[0])


def write_observable_csv(fh, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with a header line; floats with 17 significant digits, sites space-separated."""
    write_csv(fh, header, rows)
