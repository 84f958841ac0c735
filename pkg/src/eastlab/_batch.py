"""Numba kernels running many seeded replicates of one finite system.

Each replicate ``r`` uses the dynamics streams keyed by ``seeds[r]``.  The
initial extended state is ``ext0``; when ``rho >= 0`` the region spins are
instead drawn as Bernoulli(rho) from the initial streams (the same draws
as :class:`eastlab.engine.BernoulliLaw`).  Sites listed in ``force_idx``
are then set to ``force_val``.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from ._core import advance, init_clocks
from .rng import TAG_DYNAMICS, TAG_INITIAL, stream_base, uniform


@nb.njit(inline="always")
def prepare(ext0, keys, seed, rho, force_idx, force_val, bases, ext):
    n = keys.shape[0]
    ext[:] = ext0
    for i in range(n):
        bases[i] = stream_base(seed, keys[i], TAG_DYNAMICS)
        if rho >= 0.0:
            ext[i] = 1 if uniform(stream_base(seed, keys[i], TAG_INITIAL), 0) < rho else 0
    for j in range(force_idx.shape[0]):
        ext[force_idx[j]] = force_val[j]


@nb.njit(cache=True)
def empty_record():
    return (np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int8),
            np.empty(0, dtype=np.int8), np.empty(0, dtype=np.int8))


@nb.njit(cache=True, nogil=True)
def snapshots(ext0, down, keys, seeds, p, rho, force_idx, force_val, times, report):
    """Spins of the sites ``report`` at each of the sorted ``times``.

    Returns an int8 array of shape ``(len(seeds), len(times), len(report))``.
    """
    n = keys.shape[0]
    out = np.empty((seeds.shape[0], times.shape[0], report.shape[0]), dtype=np.int8)
    ext = np.empty_like(ext0)
    bases = np.empty(n, dtype=np.uint64)
    watch = np.zeros(n, dtype=np.int8)
    rt, rs, rl, rc, rv = empty_record()
    for r in range(seeds.shape[0]):
        prepare(ext0, keys, seeds[r], rho, force_idx, force_val, bases, ext)
        clock, counts, heap = init_clocks(bases)
        for j in range(times.shape[0]):
            advance(ext, down, bases, p, clock, counts, heap, times[j], -1, 0, watch, False,
                    0, rt, rs, rl, rc, rv)
            for k in range(report.shape[0]):
                out[r, j, k] = ext[report[k]]
    return out


@nb.njit(cache=True, nogil=True)
def hitting(ext0, down, keys, seeds, p, rho, force_idx, force_val, horizon, site, value):
    """First time ``site`` holds ``value`` in each replicate (``inf`` if not by ``horizon``)."""
    n = keys.shape[0]
    out = np.empty(seeds.shape[0])
    ext = np.empty_like(ext0)
    bases = np.empty(n, dtype=np.uint64)
    watch = np.zeros(n, dtype=np.int8)
    rt, rs, rl, rc, rv = empty_record()
    for r in range(seeds.shape[0]):
        prepare(ext0, keys, seeds[r], rho, force_idx, force_val, bases, ext)
        if ext[site] == value:
            out[r] = 0.0
            continue
        clock, counts, heap = init_clocks(bases)
        res = advance(ext, down, bases, p, clock, counts, heap, horizon, site, value, watch, False,
                      0, rt, rs, rl, rc, rv)
        out[r] = res[2] if res[2] >= 0.0 else np.inf
    return out


@nb.njit(cache=True, nogil=True)
def occupation(ext0, down, keys, seeds, p, rho, force_idx, force_val, times, site):
    """Time spent at 0 by ``site`` over ``[0, t]`` for each of the sorted ``times``.

    Returns a float array of shape ``(len(seeds), len(times))``.
    """
    n = keys.shape[0]
    out = np.zeros((seeds.shape[0], times.shape[0]))
    ext = np.empty_like(ext0)
    bases = np.empty(n, dtype=np.uint64)
    watch = np.zeros(n, dtype=np.int8)
    watch[site] = 1
    rt, rs, rl, rc, rv = empty_record()
    t_max = times[times.shape[0] - 1] if times.shape[0] > 0 else 0.0
    for r in range(seeds.shape[0]):
        prepare(ext0, keys, seeds[r], rho, force_idx, force_val, bases, ext)
        value = ext[site]
        clock, counts, heap = init_clocks(bases)
        m, _, _, rt, rs, rl, rc, rv = advance(ext, down, bases, p, clock, counts, heap, t_max, -1, 0,
                                               watch, True, 0, rt, rs, rl, rc, rv)
        # Kahan-compensated accumulation of the zero intervals
        acc = 0.0
        comp = 0.0
        last = 0.0
        e = 0
        for j in range(times.shape[0]):
            t = times[j]
            while e < m and rt[e] <= t:
                if value == 0:
                    y = (rt[e] - last) - comp
                    s = acc + y
                    comp = (s - acc) - y
                    acc = s
                last = rt[e]
                value = rv[e]
                e += 1
            tail = (t - last) if value == 0 else 0.0
            out[r, j] = acc + (tail - comp)
    return out
