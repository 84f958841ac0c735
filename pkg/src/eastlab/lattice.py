"""Lattice geometry, spin configurations and boundary conditions.

Sites are integer tuples. A configuration assigns an occupancy 0
(vacancy) or 1 (particle) to every site of a finite region; the spin at
``x`` may be refreshed only when some ``x - e_i`` holds a vacancy, with
sites outside the region read from a boundary condition on the East
boundary.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DomainError, SizeError
from .rng import site_keys

Site = tuple

MAX_SITES = 2**31


def as_site(x) -> Site:
    return tuple(int(c) for c in x)


def l1_norm(x) -> int:
    return sum(abs(int(c)) for c in x)


def basis(d: int) -> list[Site]:
    return [tuple(1 if j == i else 0 for j in range(d)) for i in range(d)]


def shift(x, i: int, delta: int = -1) -> Site:
    """``x + delta * e_i``."""
    y = list(x)
    y[i] += delta
    return tuple(y)


def in_up_quadrant(y, x) -> bool:
    """True iff ``y`` is influenced by ``x``: ``y >= x`` componentwise and ``y != x``."""
    return tuple(y) != tuple(x) and all(a >= b for a, b in zip(y, x))


def in_down_quadrant(y, x) -> bool:
    """True iff ``y`` influences ``x``, i.e. ``x`` lies in the up quadrant of ``y``."""
    return in_up_quadrant(x, y)


@dataclass(frozen=True)
class Box:
    """The box ``prod_i [lo_i, hi_i]``; sites are ordered lexicographically."""

    lo: Site
    hi: Site

    def __post_init__(self):
        object.__setattr__(self, "lo", as_site(self.lo))
        object.__setattr__(self, "hi", as_site(self.hi))
        if len(self.lo) != len(self.hi) or not self.lo:
            raise ConfigurationError("box corners must have the same positive dimension")
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ConfigurationError(f"empty box {self.lo}..{self.hi}")
        if self.size > MAX_SITES:
            raise SizeError(f"box with {self.size} sites exceeds the cap of {MAX_SITES}")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def strides(self) -> tuple:
        out, acc = [], 1
        for n in reversed(self.shape):
            out.append(acc)
            acc *= n
        return tuple(reversed(out))

    def __contains__(self, y) -> bool:
        return len(y) == self.dim and all(a <= c <= b for a, c, b in zip(self.lo, y, self.hi))

    def index(self, y) -> int:
        if y not in self:
            raise KeyError(y)
        return sum((c - a) * s for c, a, s in zip(y, self.lo, self.strides))

    def site(self, i: int) -> Site:
        return tuple(int(c) for c in np.unravel_index(i, self.shape) + np.asarray(self.lo))

    def sites(self) -> list[Site]:
        return list(itertools.product(*(range(a, b + 1) for a, b in zip(self.lo, self.hi))))

    def coords(self) -> np.ndarray:
        grid = np.indices(self.shape, dtype=np.int64).reshape(self.dim, -1).T
        return grid + np.asarray(self.lo, dtype=np.int64)

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class SiteSet:
    """An explicit finite set of sites, kept in lexicographic order."""

    members: tuple

    def __post_init__(self):
        sites = sorted({as_site(x) for x in self.members})
        if sites and len({len(x) for x in sites}) != 1:
            raise ConfigurationError("all sites must have the same dimension")
        if len(sites) > MAX_SITES:
            raise SizeError("site set exceeds the size cap")
        object.__setattr__(self, "members", tuple(sites))

    @functools.cached_property
    def _lookup(self) -> dict:
        return {x: i for i, x in enumerate(self.members)}

    @property
    def dim(self) -> int:
        return len(self.members[0]) if self.members else 0

    @property
    def size(self) -> int:
        return len(self.members)

    def __contains__(self, y) -> bool:
        return tuple(y) in self._lookup

    def index(self, y) -> int:
        return self._lookup[tuple(y)]

    def site(self, i: int) -> Site:
        return self.members[i]

    def sites(self) -> list[Site]:
        return list(self.members)

    def coords(self) -> np.ndarray:
        return np.asarray(self.members, dtype=np.int64).reshape(self.size, self.dim)

    def __len__(self) -> int:
        return self.size


Region = Union[Box, SiteSet]


def box(lo, hi) -> Box:
    return Box(as_site(lo), as_site(hi))


def cube(L: int, d: int, start: int = 1) -> Box:
    """``[start, start + L - 1]^d``; the default is the box ``[1, L]^d``."""
    return Box((start,) * d, (start + L - 1,) * d)


def down_box(x) -> Box:
    """``prod_i [0, x_i]`` for a site of the positive quadrant."""
    class_of(x)
    x = as_site(x)
    return Box((0,) * len(x), x)


def window(ell: int, d: int, origin=None) -> Box:
    """``origin + [-ell + 1, 0]^d``."""
    if ell < 1:
        raise DomainError("window side must be >= 1")
    origin = (0,) * d if origin is None else as_site(origin)
    return Box(tuple(c - ell + 1 for c in origin), origin)


def class_of(x) -> int:
    """Class of a site of the positive quadrant: its smallest coordinate."""
    x = as_site(x)
    if not x or min(x) < 0:
        raise DomainError(f"{x} is not in the positive quadrant")
    return min(x)


def east_boundary(region: Region) -> list[Site]:
    """Sites ``y`` outside the region with ``y + e_i`` inside for some ``i``."""
    if isinstance(region, Box):
        out = []
        for i in range(region.dim):
            ranges = [range(a, b + 1) for a, b in zip(region.lo, region.hi)]
            ranges[i] = (region.lo[i] - 1,)
            out.extend(itertools.product(*ranges))
        return sorted(out)
    found = set()
    for x in region.sites():
        for i in range(region.dim):
            y = shift(x, i)
            if y not in region:
                found.add(y)
    return sorted(found)


@dataclass(frozen=True)
class ModelParams:
    """Vacancy probability ``q``; particles are drawn with ``p = 1 - q``."""

    q: float

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ConfigurationError(f"q must lie in (0, 1), got {self.q}")

    @property
    def p(self) -> float:
        return 1.0 - self.q


class SpinConfig:
    """Occupancy values on a region, one bit per site in lexicographic order."""

    __slots__ = ("region", "_bits")

    def __init__(self, region: Region, bits: np.ndarray):
        self.region = region
        self._bits = bits

    @classmethod
    def from_array(cls, region: Region, values) -> "SpinConfig":
        values = np.asarray(values).reshape(-1)
        if values.size != region.size:
            raise ConfigurationError(f"expected {region.size} spins, got {values.size}")
        if np.any((values != 0) & (values != 1)):
            raise ConfigurationError("spins must be 0 or 1")
        return cls(region, np.packbits(values.astype(np.uint8), bitorder="little"))

    @classmethod
    def zeros(cls, region: Region) -> "SpinConfig":
        return cls.from_array(region, np.zeros(region.size, dtype=np.uint8))

    @classmethod
    def ones(cls, region: Region) -> "SpinConfig":
        return cls.from_array(region, np.ones(region.size, dtype=np.uint8))

    @classmethod
    def from_mapping(cls, region: Region, mapping: dict, default: int = 1) -> "SpinConfig":
        values = np.full(region.size, default, dtype=np.uint8)
        for y, v in mapping.items():
            values[region.index(as_site(y))] = v
        return cls.from_array(region, values)

    @classmethod
    def from_index(cls, region: Region, index: int) -> "SpinConfig":
        """Inverse of :meth:`encode`."""
        n = region.size
        values = (np.int64(index) >> np.arange(n, dtype=np.int64)) & 1
        return cls.from_array(region, values)

    def to_array(self) -> np.ndarray:
        return np.unpackbits(self._bits, count=self.region.size, bitorder="little")

    def as_grid(self) -> np.ndarray:
        return self.to_array().reshape(self.region.shape)

    def encode(self) -> int:
        """State index with bit ``i`` holding the spin of the ``i``-th site."""
        values = self.to_array().astype(np.int64)
        return int(np.sum(values << np.arange(values.size, dtype=np.int64)))

    def _locate(self, x):
        i = self.region.index(as_site(x))
        return i >> 3, np.uint8(1 << (i & 7))

    def __getitem__(self, x) -> int:
        byte, mask = self._locate(x)
        return int(bool(self._bits[byte] & mask))

    def __setitem__(self, x, value: int):
        byte, mask = self._locate(x)
        if value:
            self._bits[byte] |= mask
        else:
            self._bits[byte] &= ~mask

    def flip(self, x) -> None:
        byte, mask = self._locate(x)
        self._bits[byte] ^= mask

    def flipped(self, x) -> "SpinConfig":
        out = self.copy()
        out.flip(x)
        return out

    def copy(self) -> "SpinConfig":
        return SpinConfig(self.region, self._bits.copy())

    @property
    def n_ones(self) -> int:
        return int(self.to_array().sum())

    @property
    def n_zeros(self) -> int:
        return self.region.size - self.n_ones

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpinConfig):
            return NotImplemented
        return self.region == other.region and bool(np.array_equal(self._bits, other._bits))

    def __repr__(self) -> str:
        bits = "".join(map(str, self.to_array()[:64]))
        return f"SpinConfig({self.region}, {bits}{'...' if self.region.size > 64 else ''})"


@dataclass(frozen=True)
class Classification:
    ergodic: bool
    minimal: bool
    maximal: bool


class BoundaryCondition:
    """Frozen spins on the East boundary of a region."""

    def __init__(self, region: Region, values: Sequence[int] | np.ndarray):
        self.region = region
        self.sites = east_boundary(region)
        values = np.asarray(values, dtype=np.uint8).reshape(-1)
        if values.size != len(self.sites):
            raise ConfigurationError(
                f"boundary has {len(self.sites)} sites, got {values.size} values"
            )
        if np.any(values > 1):
            raise ConfigurationError("boundary spins must be 0 or 1")
        self.values = values
        self._lookup = {y: i for i, y in enumerate(self.sites)}

    @classmethod
    def from_mapping(cls, region: Region, mapping: dict, default: int = 1) -> "BoundaryCondition":
        sites = east_boundary(region)
        return cls(region, [mapping.get(y, default) for y in sites])

    @classmethod
    def maximal(cls, region: Region) -> "BoundaryCondition":
        return cls(region, np.zeros(len(east_boundary(region)), dtype=np.uint8))

    @classmethod
    def all_ones(cls, region: Region) -> "BoundaryCondition":
        return cls(region, np.ones(len(east_boundary(region)), dtype=np.uint8))

    @classmethod
    def minimal(cls, region: Box, axis: int = 0) -> "BoundaryCondition":
        """Single vacancy at ``lo - e_axis``, particles elsewhere."""
        if not isinstance(region, Box):
            raise ConfigurationError("minimal boundary conditions are defined for boxes")
        return cls.from_mapping(region, {shift(region.lo, axis): 0})

    @classmethod
    def named(cls, region: Region, name: str) -> "BoundaryCondition":
        name = name.lower()
        if name == "minimal":
            return cls.minimal(region)
        if name.startswith("minimal-"):
            return cls.minimal(region, int(name.split("-", 1)[1]) - 1)
        if name == "maximal":
            return cls.maximal(region)
        if name in ("ones", "all-ones"):
            return cls.all_ones(region)
        raise ConfigurationError(f"unknown boundary condition {name!r}")

    def __getitem__(self, y) -> int:
        return int(self.values[self._lookup[tuple(y)]])

    def __contains__(self, y) -> bool:
        return tuple(y) in self._lookup

    def __len__(self) -> int:
        return len(self.sites)

    @functools.cached_property
    def classification(self) -> Classification:
        return classify_boundary(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoundaryCondition):
            return NotImplemented
        return self.region == other.region and bool(np.array_equal(self.values, other.values))

    def __repr__(self) -> str:
        return f"BoundaryCondition({self.region}, {''.join(map(str, self.values))})"


def classify_boundary(bc: BoundaryCondition, region: Box | None = None) -> Classification:
    """Ergodicity class of a boundary condition on a box.

    Ergodic iff one of the ``lo - e_i`` carries a vacancy; minimal iff in
    addition that is the only boundary vacancy; maximal iff every
    boundary spin is zero.
    """
    region = bc.region if region is None else region
    if not isinstance(region, Box):
        raise ConfigurationError("boundary classification is only defined for boxes")
    corner = [bc[shift(region.lo, i)] for i in range(region.dim)]
    ergodic = 0 in corner
    n_vacancies = int(np.sum(bc.values == 0))
    return Classification(
        ergodic=ergodic,
        minimal=ergodic and n_vacancies == 1,
        maximal=n_vacancies == len(bc),
    )


def constraint(x, config: SpinConfig, bc: BoundaryCondition | None) -> bool:
    """True iff some ``x - e_i`` is vacant in the configuration joined with ``bc``."""
    x = as_site(x)
    region = config.region
    if x not in region:
        raise DomainError(f"{x} is not in the region")
    for i in range(len(x)):
        y = shift(x, i)
        if y in region:
            v = config[y]
        elif bc is not None and y in bc:
            v = bc[y]
        else:
            raise ConfigurationError(f"neighbour {y} of {x} is neither in the region nor the boundary")
        if v == 0:
            return True
    return False


def pi_weight(config: SpinConfig, params: ModelParams) -> float:
    """Product Bernoulli(p) probability of a configuration."""
    return params.p**config.n_ones * params.q**config.n_zeros


def sample_pi(region: Region, params: ModelParams, rng: np.random.Generator) -> SpinConfig:
    return SpinConfig.from_array(region, (rng.random(region.size) < params.p).astype(np.uint8))


@dataclass(frozen=True, eq=False)
class Geometry:
    """Index tables used by the simulation kernels.

    The extended state vector holds the region's spins at indices
    ``0..n-1`` followed by the boundary spins; ``down[i, j]`` is the
    extended index of ``site_i - e_j``.
    """

    region: Region
    boundary: list
    coords: np.ndarray
    down: np.ndarray
    keys: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def extended(self, config: SpinConfig, bc: BoundaryCondition | None) -> np.ndarray:
        if config.region != self.region:
            raise ConfigurationError("configuration lives on a different region")
        out = np.empty(self.n + len(self.boundary), dtype=np.int8)
        out[: self.n] = config.to_array()
        if self.boundary:
            if bc is None or bc.sites != self.boundary:
                raise ConfigurationError("boundary condition does not cover the East boundary")
            out[self.n :] = bc.values
        return out


@functools.lru_cache(maxsize=64)
def geometry(region: Region) -> Geometry:
    bsites = east_boundary(region)
    n, d = region.size, region.dim
    blookup = {y: n + i for i, y in enumerate(bsites)}
    coords = region.coords()
    down = np.empty((n, d), dtype=np.int64)
    if isinstance(region, Box):
        idx = np.arange(n, dtype=np.int64)
        for j, stride in enumerate(region.strides):
            face = coords[:, j] == region.lo[j]
            down[:, j] = idx - stride
            rows = np.nonzero(face)[0]
            down[rows, j] = [blookup[shift(tuple(coords[r]), j)] for r in rows]
    else:
        lookup = region._lookup
        for i, x in enumerate(region.sites()):
            for j in range(d):
                y = shift(x, j)
                down[i, j] = lookup[y] if y in lookup else blookup[y]
    return Geometry(region, bsites, coords, down, site_keys(coords))


def all_configs(region: Region) -> Iterable[SpinConfig]:
    for index in range(2**region.size):
        yield SpinConfig.from_index(region, index)
