"""The distinguished zero: a tagged vacancy that moves down-left at legal rings.

Starting from a vacancy at ``x``, at every legal ring at its current
position ``z`` the tagged vacancy jumps to the lexicographically smallest
vacant site among ``z - e_i`` (read just before the ring).  Because the
basis vectors are visited in order ``i = 0, 1, ...``, the smallest such site
in lexicographic order is the one with the smallest ``i``.

The trace up to time ``t`` is the list of positions left before ``t``;
conditioned on the number of jumps, the spins left on the trace are
expected to be i.i.d. Bernoulli(p).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numba as nb
import numpy as np

from ._batch import prepare
from ._core import simulate
from .engine import BernoulliLaw, Trajectory, _check_bc
from .ensemble import map_chunks
from .errors import ConfigurationError, DomainError, EastLabError, StatisticalError, TruncationError
from .lattice import BoundaryCondition, ModelParams, Region, Site, SpinConfig, geometry
from .rng import replicate_seeds

__all__ = [
    "DistinguishedZeroTrace",
    "TraceSamples",
    "sample_trace_law",
    "sample_trace_laws",
    "track",
]

OK, TRUNCATED, NO_VACANCY, NOT_VACANT = 0, 1, 2, 3


class TraceInvariantError(EastLabError, RuntimeError):
    """The replay found a state the distinguished zero can never be in."""


@nb.njit(cache=True, nogil=True)
def replay(ext, down, n, rec_t, rec_s, rec_l, rec_v, m, start, max_jumps, jump_t, jump_z):
    """Follow the distinguished zero through ``m`` recorded rings.

    ``ext`` holds the initial extended state and is advanced in place.
    Returns ``(jumps, status, event)``: ``event`` is the ring index at
    which a non-OK status arose.
    """
    z = start
    k = 0
    for e in range(m):
        i = rec_s[e]
        if i == z and rec_l[e] != 0:
            if k == max_jumps:
                return k, OK, e
            target = -1
            for j in range(down.shape[1]):
                y = down[z, j]
                if ext[y] == 0:
                    target = y
                    break
            if target < 0:
                return k, NO_VACANCY, e
            jump_t[k] = rec_t[e]
            jump_z[k] = target
            k += 1
            if target >= n:
                return k, TRUNCATED, e
            z = target
        ext[i] = rec_v[e]
        if ext[z] != 0:
            return k, NOT_VACANT, e
    return k, OK, m


@dataclass(frozen=True)
class DistinguishedZeroTrace:
    """Jump times and positions of the distinguished zero started at ``start``.

    ``jump_times[k - 1]`` is the time of the ``k``-th jump and
    ``positions[k]`` the position after it; ``positions[0] == start``.
    """

    start: Site
    horizon: float
    jump_times: np.ndarray
    positions: tuple

    def n_jumps(self, t: float | None = None) -> int:
        """Number of jumps at times ``<= t`` (default: the horizon)."""
        t = self.horizon if t is None else t
        return int(np.searchsorted(self.jump_times, t, side="right"))

    def trace(self, t: float | None = None) -> list[Site]:
        """Positions left by time ``t``: ``z^(0), ..., z^(N_t - 1)``; empty if no jump."""
        return list(self.positions[: self.n_jumps(t)])

    def position(self, t: float | None = None) -> Site:
        """Current position of the distinguished zero at time ``t``."""
        return self.positions[self.n_jumps(t)]


def track(trajectory: Trajectory, x, max_jumps: int | None = None) -> DistinguishedZeroTrace:
    """Replay ``trajectory`` following the vacancy initially at ``x``.

    Raises
    ------
    DomainError
        If the spin at ``x`` is initially 1.
    TruncationError
        If the distinguished zero jumps onto a site outside the region.
    TraceInvariantError
        If a legal ring finds no vacant neighbour, or the tracked site is
        found occupied (both impossible for a consistent trajectory).
    """
    x = tuple(int(c) for c in x)
    region = trajectory.region
    if x not in region:
        raise DomainError(f"start site {x} lies outside the region")
    if trajectory.initial[x] != 0:
        raise DomainError(f"start site {x} is not vacant initially")
    geo = geometry(region)
    ext = geo.extended(trajectory.initial, trajectory.bc)
    limit = len(trajectory) if max_jumps is None else int(max_jumps)
    jump_t = np.empty(limit + 1)
    jump_z = np.empty(limit + 1, dtype=np.int64)
    k, status, event = replay(ext, geo.down, geo.n, trajectory.times, trajectory.sites,
                              trajectory.legal.astype(np.int8), trajectory.values, len(trajectory),
                              region.index(x), limit, jump_t, jump_z)
    if status == TRUNCATED:
        raise TruncationError(
            f"distinguished zero left the region at time {jump_t[k - 1]!r}; enlarge the region")
    if status != OK:
        what = "no vacant neighbour at a legal ring" if status == NO_VACANCY else "tracked site occupied"
        raise TraceInvariantError(f"{what} (ring {event})")
    positions = (x,) + tuple(region.site(int(i)) for i in jump_z[:k])
    return DistinguishedZeroTrace(x, trajectory.horizon, jump_t[:k].copy(), positions)


# ----------------------------------------------------------------------------
# sampling the spins left on the trace


@nb.njit(cache=True, nogil=True)
def _trace_batch(ext0, down, keys, seeds, p, rho, force_idx, force_val, t_end, start, max_jumps,
                 n_max):
    n = keys.shape[0]
    size = seeds.shape[0]
    jumps = np.empty(size, dtype=np.int64)
    status = np.empty(size, dtype=np.int8)
    taus = np.full((size, max_jumps), np.nan)
    patterns = np.full((size, n_max), -1, dtype=np.int8)
    ext = np.empty_like(ext0)
    bases = np.empty(n, dtype=np.uint64)
    watch = np.ones(n, dtype=np.int8)
    rt = np.empty(256)
    rs = np.empty(256, dtype=np.int64)
    rl = np.empty(256, dtype=np.int8)
    rc = np.empty(256, dtype=np.int8)
    rv = np.empty(256, dtype=np.int8)
    jt = np.empty(max_jumps + 1)
    jz = np.empty(max_jumps + 1, dtype=np.int64)
    for r in range(size):
        prepare(ext0, keys, seeds[r], rho, force_idx, force_val, bases, ext)
        init = ext.copy()
        m, _, _, rt, rs, rl, rc, rv = simulate(ext, down, bases, p, t_end, -1, 0, watch, True,
                                               rt, rs, rl, rc, rv)
        k, st, _ = replay(init, down, n, rt, rs, rl, rv, m, start, max_jumps, jt, jz)
        jumps[r] = k
        status[r] = st
        for j in range(k):
            taus[r, j] = jt[j]
        for j in range(min(k, n_max)):
            pos = start if j == 0 else jz[j - 1]
            patterns[r, j] = ext[pos]
    return jumps, status, taus, patterns


@dataclass
class TraceSamples:
    """Replicates with exactly ``n`` jumps by time ``t`` and the spins left on their trace.

    ``patterns[:, k]`` is the spin at ``z^(k)`` at time ``t``.
    """

    n: int
    t: float
    p: float
    replicates: int
    index: np.ndarray
    seeds: np.ndarray
    taus: np.ndarray
    patterns: np.ndarray

    @property
    def n_kept(self) -> int:
        return int(self.index.size)

    def codes(self) -> np.ndarray:
        """Pattern as an integer whose bit string reads ``z^(0) z^(1) ...``."""
        weights = 1 << np.arange(self.n - 1, -1, -1, dtype=np.int64)
        return self.patterns.astype(np.int64) @ weights

    def counts(self) -> np.ndarray:
        """Counts of each of the ``2**n`` patterns, indexed by :meth:`codes`."""
        return np.bincount(self.codes(), minlength=2**self.n)

    def expected(self, p: float | None = None) -> np.ndarray:
        """Product Bernoulli(p) probabilities of each pattern, indexed like :meth:`counts`."""
        p = self.p if p is None else p
        codes = np.arange(2**self.n)
        ones = np.array([bin(c).count("1") for c in codes])
        return p**ones * (1 - p) ** (self.n - ones)

    def write_csv(self, fh) -> None:
        """Columns ``seed, N_t, tau_1..tau_n, pattern``."""
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seed", "N_t"] + [f"tau_{k}" for k in range(1, self.n + 1)] + ["pattern"])
        for seed, taus, pattern in zip(self.seeds, self.taus, self.patterns):
            writer.writerow([int(seed), self.n] + [f"{tau:.17g}" for tau in taus]
                            + ["".join(str(int(b)) for b in pattern)])


def _trace_setup(x, initial, bc, region):
    if isinstance(initial, SpinConfig):
        region = initial.region
        if initial[x] != 0:
            raise DomainError(f"start site {x} is not vacant initially")
        return region, initial, -1.0
    if isinstance(initial, BernoulliLaw):
        if region is None:
            raise ConfigurationError("a random initial law needs an explicit region")
        return region, SpinConfig.zeros(region), float(initial.rho)
    raise ConfigurationError("initial must be a SpinConfig or a BernoulliLaw")


def sample_trace_laws(x, initial: SpinConfig | BernoulliLaw, bc: BoundaryCondition | None,
                      params: ModelParams, t: float, ns: Sequence[int], replicates: int, seed: int,
                      *, region: Region | None = None, threads: int = 1, min_kept: int = 1,
                      target_kept: int | None = None, block: int = 50_000) -> dict[int, TraceSamples]:
    """Spins on the trace at time ``t`` for replicates with ``N_t = n``, for each ``n``.

    Every replicate is used for the single ``n`` equal to its jump count
    (exact rejection, no reweighting).  With a :class:`BernoulliLaw`
    initial state the start site is forced vacant.

    With ``target_kept`` set, replicates are run in blocks of ``block``
    consecutive indices until every ``n`` has at least ``target_kept``
    samples or ``replicates`` is reached; the stopping point depends only
    on the seed, never on ``threads``.

    Raises
    ------
    StatisticalError
        If fewer than ``min_kept`` replicates remain for some ``n``.
    TruncationError
        If some replicate's distinguished zero left the region before its
        count could be settled.
    """
    x = tuple(int(c) for c in x)
    ns = sorted({int(n) for n in ns})
    if not ns or ns[0] < 1:
        raise ConfigurationError("jump counts must be at least 1")
    region, base, rho = _trace_setup(x, initial, bc, region)
    _check_bc(region, bc, False)
    geo = geometry(region)
    ext0 = geo.extended(base, bc)
    start = region.index(x)
    n_max = ns[-1]
    max_jumps = n_max + 1
    force_idx = np.array([start], dtype=np.int64)
    force_val = np.zeros(1, dtype=np.int8)
    p = params.p

    def fn(chunk):
        out = _trace_batch(ext0, geo.down, geo.keys, chunk, p, rho, force_idx, force_val, float(t),
                           start, max_jumps, n_max)
        return np.column_stack([out[0], out[1], out[2], out[3]])

    if target_kept is None:
        seeds = replicate_seeds(seed, replicates)
        packed = map_chunks(fn, seeds, threads)
    else:
        blocks, done = [], 0
        kept = np.zeros(n_max + 2, dtype=np.int64)
        while done < replicates:
            size = min(int(block), replicates - done)
            blocks.append(map_chunks(fn, replicate_seeds(seed, size, done), threads))
            done += size
            kept += np.bincount(np.minimum(blocks[-1][:, 0].astype(np.int64), n_max + 1),
                                minlength=n_max + 2)
            if all(kept[n] >= target_kept for n in ns):
                break
        packed = np.concatenate(blocks)
        replicates = done
        seeds = replicate_seeds(seed, replicates)
    jumps = packed[:, 0].astype(np.int64)
    status = packed[:, 1].astype(np.int8)
    taus = packed[:, 2 : 2 + max_jumps]
    patterns = packed[:, 2 + max_jumps :].astype(np.int8)
    if np.any(status == TRUNCATED):
        raise TruncationError("distinguished zero left the region; enlarge the region")
    if np.any(status > TRUNCATED):
        raise TraceInvariantError("replay invariant violated")
    result = {}
    for n in ns:
        keep = np.flatnonzero(jumps == n)
        if keep.size < max(1, min_kept):
            raise StatisticalError(
                f"only {keep.size} replicates with N_t = {n} out of {replicates}")
        result[n] = TraceSamples(n, float(t), p, int(replicates), keep, seeds[keep],
                                 taus[keep, :n].copy(), patterns[keep, :n].copy())
    return result


def sample_trace_law(x, initial: SpinConfig | BernoulliLaw, bc: BoundaryCondition | None,
                     params: ModelParams, t: float, n: int, replicates: int, seed: int,
                     **kwargs) -> TraceSamples:
    """Single-``n`` form of :func:`sample_trace_laws`."""
    return sample_trace_laws(x, initial, bc, params, t, [n], replicates, seed, **kwargs)[int(n)]
