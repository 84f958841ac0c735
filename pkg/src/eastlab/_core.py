"""Numba kernels for event-driven simulation of the graphical construction.

All kernels work on the extended state vector of a :class:`Geometry`
(region spins followed by frozen boundary spins) and on per-site stream
bases produced by :func:`eastlab.rng.stream_bases`.  Each site keeps one
pending ring in a binary heap ordered by ``(time, site index)``; site
indices follow lexicographic order, which breaks (probability zero) ties.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .rng import coin, ring_gap

NO_STOP = -1


@nb.njit(inline="always")
def _before(times, a, b):
    ta = times[a]
    tb = times[b]
    return ta < tb or (ta == tb and a < b)


@nb.njit(inline="always")
def _sift_down(heap, pos, times, size):
    item = heap[pos]
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        right = child + 1
        if right < size and _before(times, heap[right], heap[child]):
            child = right
        if _before(times, heap[child], item):
            heap[pos] = heap[child]
            pos = child
        else:
            break
    heap[pos] = item


@nb.njit(cache=True, nogil=True)
def init_clocks(bases):
    n = bases.shape[0]
    times = np.empty(n)
    counts = np.ones(n, dtype=np.int64)
    heap = np.arange(n, dtype=np.int64)
    for i in range(n):
        times[i] = ring_gap(bases[i], 0)
    for pos in range(n // 2 - 1, -1, -1):
        _sift_down(heap, pos, times, n)
    return times, counts, heap


@nb.njit(inline="always")
def is_legal(ext, down, i):
    for j in range(down.shape[1]):
        if ext[down[i, j]] == 0:
            return True
    return False


@nb.njit(cache=True)
def _grow(a, size):
    out = np.empty(size, dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


@nb.njit(inline="always")
def _record(m, t, i, legal, c, v, rec_t, rec_s, rec_l, rec_c, rec_v):
    if m == rec_t.shape[0]:
        size = max(16, 2 * m)
        rec_t = _grow(rec_t, size)
        rec_s = _grow(rec_s, size)
        rec_l = _grow(rec_l, size)
        rec_c = _grow(rec_c, size)
        rec_v = _grow(rec_v, size)
    rec_t[m] = t
    rec_s[m] = i
    rec_l[m] = 1 if legal else 0
    rec_c[m] = c
    rec_v[m] = v
    return m + 1, rec_t, rec_s, rec_l, rec_c, rec_v


@nb.njit(cache=True, nogil=True)
def advance(ext, down, bases, p, times, counts, heap, t_end, stop_site, stop_value, watch, record,
            m, rec_t, rec_s, rec_l, rec_c, rec_v):
    """Process every ring up to ``t_end`` from the clock state ``(times, counts, heap)``.

    Rings at sites with ``watch[i] != 0`` are appended to the record
    arrays (starting at position ``m``) when ``record`` is set.  If
    ``stop_site >= 0`` the run ends at the first ring after which that
    site holds ``stop_value``.

    Returns ``(m, n_events, stop_time, rec_t, rec_s, rec_l, rec_c,
    rec_v)``; ``stop_time`` is ``-1.0`` when no stop occurred.
    """
    n = bases.shape[0]
    n_events = 0
    if n == 0:
        return m, n_events, -1.0, rec_t, rec_s, rec_l, rec_c, rec_v
    while True:
        i = heap[0]
        t = times[i]
        if t > t_end:
            break
        c = coin(bases[i], counts[i] - 1, p)
        legal = is_legal(ext, down, i)
        if legal:
            ext[i] = c
        n_events += 1
        if record and watch[i] != 0:
            m, rec_t, rec_s, rec_l, rec_c, rec_v = _record(m, t, i, legal, c, ext[i],
                                                            rec_t, rec_s, rec_l, rec_c, rec_v)
        times[i] = t + ring_gap(bases[i], counts[i])
        counts[i] += 1
        _sift_down(heap, 0, times, n)
        if i == stop_site and ext[i] == stop_value:
            return m, n_events, t, rec_t, rec_s, rec_l, rec_c, rec_v
    return m, n_events, -1.0, rec_t, rec_s, rec_l, rec_c, rec_v


@nb.njit(cache=True, nogil=True)
def simulate(ext, down, bases, p, t_end, stop_site, stop_value, watch, record,
             rec_t, rec_s, rec_l, rec_c, rec_v):
    """Advance ``ext`` in place from time 0 up to ``t_end``; see :func:`advance`."""
    if stop_site >= 0 and ext[stop_site] == stop_value:
        return 0, 0, 0.0, rec_t, rec_s, rec_l, rec_c, rec_v
    times, counts, heap = init_clocks(bases)
    return advance(ext, down, bases, p, times, counts, heap, t_end, stop_site, stop_value, watch,
                   record, 0, rec_t, rec_s, rec_l, rec_c, rec_v)


@nb.njit(cache=True, nogil=True)
def simulate_coupled(exts, down, bases, p, t_end):
    """Grand coupling: every row of ``exts`` reads the same rings and coins.

    Returns ``(coalescence_time, violations, n_events)`` where the
    coalescence time is the first time all copies agree (``inf`` if they
    never do before ``t_end``) and ``violations`` counts events after
    coalescence at which the copies disagreed.
    """
    m_copies = exts.shape[0]
    n = bases.shape[0]
    differing = 0
    for i in range(n):
        for r in range(1, m_copies):
            if exts[r, i] != exts[0, i]:
                differing += 1
                break
    coalesced_at = 0.0 if differing == 0 else np.inf
    violations = 0
    n_events = 0
    if n == 0:
        return coalesced_at, violations, n_events
    times, counts, heap = init_clocks(bases)
    while True:
        i = heap[0]
        t = times[i]
        if t > t_end:
            break
        c = coin(bases[i], counts[i] - 1, p)
        before = False
        after = False
        for r in range(m_copies):
            if r > 0 and exts[r, i] != exts[0, i]:
                before = True
            if is_legal(exts[r], down, i):
                exts[r, i] = c
        for r in range(1, m_copies):
            if exts[r, i] != exts[0, i]:
                after = True
                break
        if before and not after:
            differing -= 1
        elif after and not before:
            differing += 1
        if differing == 0 and coalesced_at == np.inf:
            coalesced_at = t
        elif differing > 0 and coalesced_at < np.inf:
            violations += 1
        n_events += 1
        times[i] = t + ring_gap(bases[i], counts[i])
        counts[i] += 1
        _sift_down(heap, 0, times, n)
    return coalesced_at, violations, n_events
