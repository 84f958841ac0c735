"""Backward (lazy) evaluation of the graphical construction on a box.

The spin at ``(y, s)`` equals the coin of the last legal ring at ``y``
before ``s`` (or the initial spin when there is none), and legality of a
ring at time ``r`` only reads the spins of the ``y - e_i`` just before
``r``.  Resolving these dependencies on demand with memoisation gives
exactly the same values as a forward run of the padded box, while only
touching the rings that can matter for the queried sites.

Sites of the box are dynamic; sites below the box's lower corner are
frozen at their initial values.  Initial spins are Bernoulli(rho) draws
from each site's initial stream.
"""

from __future__ import annotations

import numba as nb
import numpy as np
from numba import types
from numba.typed import Dict

from .rng import GOLDEN, TAG_DYNAMICS, TAG_INITIAL, mix64, ring_gap, coin, stream_base, uniform


@nb.njit(inline="always")
def _key(coords):
    d = coords.shape[0]
    h = mix64(np.uint64(d) * GOLDEN)
    for j in range(d):
        h = mix64(h ^ (np.uint64(coords[j]) + GOLDEN))
    return h


@nb.njit(inline="always")
def _initial(seed, key, rho):
    return 1 if uniform(stream_base(seed, key, TAG_INITIAL), 0) < rho else 0


@nb.njit(cache=True)
def _grow_f(a, size):
    out = np.empty(size, dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


@nb.njit(cache=True)
def _grow_2d(a, rows):
    out = np.empty((rows, a.shape[1]), dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


@nb.njit(cache=True, nogil=True)
def lazy_values(lo, shape, seed, p, rho, t_max, query, qtimes):
    """Spins of the query sites at the query times.

    Parameters
    ----------
    lo, shape : int64 arrays
        Lower corner and extents of the dynamic box.
    query : int64 array (m, d)
        Coordinates of the queried sites (inside the box).
    qtimes : float64 array
        Query times, each at most ``t_max``.

    Returns
    -------
    values : int8 array (len(qtimes), m)
    n_rings : int
        Number of rings generated, a measure of the work done.
    """
    d = lo.shape[0]
    strides = np.empty(d, dtype=np.int64)
    acc = 1
    for a in range(d - 1, -1, -1):
        strides[a] = acc
        acc *= shape[a]

    slots = Dict.empty(key_type=types.int64, value_type=types.int64)
    cap_s = 64
    s_lin = np.empty(cap_s, dtype=np.int64)
    s_coords = np.empty((cap_s, d), dtype=np.int64)
    s_start = np.empty(cap_s, dtype=np.int64)
    s_count = np.empty(cap_s, dtype=np.int64)
    s_init = np.empty(cap_s, dtype=np.int8)
    n_slots = 0
    cap_r = 1024
    r_time = np.empty(cap_r)
    r_coin = np.empty(cap_r, dtype=np.int8)
    r_after = np.empty(cap_r, dtype=np.int8)
    n_rings = 0
    stack_s = np.empty(256, dtype=np.int64)
    stack_l = np.empty(256, dtype=np.int64)
    tmp = np.empty(d, dtype=np.int64)

    m = query.shape[0]
    out = np.empty((qtimes.shape[0], m), dtype=np.int8)

    for qi in range(m):
        # slot for the queried site
        lin = 0
        for a in range(d):
            lin += (query[qi, a] - lo[a]) * strides[a]
        for ti in range(qtimes.shape[0]):
            pending_lin = lin
            target_slot = -1
            target_ell = -2
            sp = 0
            while True:
                # --- create the slot for pending_lin if needed
                if pending_lin >= 0:
                    if pending_lin in slots:
                        s_new = slots[pending_lin]
                    else:
                        if n_slots == cap_s:
                            cap_s *= 2
                            s_lin = _grow_f(s_lin, cap_s)
                            s_coords = _grow_2d(s_coords, cap_s)
                            s_start = _grow_f(s_start, cap_s)
                            s_count = _grow_f(s_count, cap_s)
                            s_init = _grow_f(s_init, cap_s)
                        s_new = n_slots
                        n_slots += 1
                        slots[pending_lin] = s_new
                        s_lin[s_new] = pending_lin
                        rem = pending_lin
                        for a in range(d):
                            s_coords[s_new, a] = lo[a] + rem // strides[a]
                            rem = rem % strides[a]
                        key = _key(s_coords[s_new])
                        s_init[s_new] = _initial(seed, key, rho)
                        base = stream_base(seed, key, TAG_DYNAMICS)
                        s_start[s_new] = n_rings
                        t = 0.0
                        ell = 0
                        while True:
                            t += ring_gap(base, ell)
                            if t > t_max:
                                break
                            if n_rings == cap_r:
                                cap_r *= 2
                                r_time = _grow_f(r_time, cap_r)
                                r_coin = _grow_f(r_coin, cap_r)
                                r_after = _grow_f(r_after, cap_r)
                            r_time[n_rings] = t
                            r_coin[n_rings] = coin(base, ell, p)
                            r_after[n_rings] = -1
                            n_rings += 1
                            ell += 1
                        s_count[s_new] = ell
                    pending_lin = -1
                    if target_slot < 0:
                        # first pass: locate the last ring at or before the query time
                        target_slot = s_new
                        st = s_start[s_new]
                        target_ell = np.searchsorted(r_time[st : st + s_count[s_new]], qtimes[ti], side="right") - 1
                        if target_ell < 0:
                            break
                        if sp == stack_s.shape[0]:
                            stack_s = _grow_f(stack_s, 2 * sp)
                            stack_l = _grow_f(stack_l, 2 * sp)
                        stack_s[sp] = s_new
                        stack_l[sp] = target_ell
                        sp += 1
                if sp == 0:
                    break
                s = stack_s[sp - 1]
                ell = stack_l[sp - 1]
                j = s_start[s] + ell
                if r_after[j] >= 0:
                    sp -= 1
                    continue
                r = r_time[j]
                legal = False
                unk_slot = -1
                unk_ell = -1
                need_lin = -1
                for a in range(d):
                    if s_coords[s, a] - 1 < lo[a]:
                        for b in range(d):
                            tmp[b] = s_coords[s, b]
                        tmp[a] -= 1
                        v = _initial(seed, _key(tmp), rho)
                    else:
                        nlin = s_lin[s] - strides[a]
                        if nlin not in slots:
                            if need_lin < 0:
                                need_lin = nlin
                            continue
                        ns = slots[nlin]
                        st = s_start[ns]
                        k = np.searchsorted(r_time[st : st + s_count[ns]], r, side="left") - 1
                        if k < 0:
                            v = s_init[ns]
                        else:
                            v = r_after[st + k]
                            if v < 0 and unk_slot < 0:
                                unk_slot = ns
                                unk_ell = k
                    if v == 0:
                        legal = True
                        break
                if legal:
                    r_after[j] = r_coin[j]
                    sp -= 1
                    continue
                if need_lin >= 0:
                    pending_lin = need_lin
                    continue
                if unk_slot >= 0:
                    if sp == stack_s.shape[0]:
                        stack_s = _grow_f(stack_s, 2 * sp)
                        stack_l = _grow_f(stack_l, 2 * sp)
                    stack_s[sp] = unk_slot
                    stack_l[sp] = unk_ell
                    sp += 1
                    continue
                # illegal ring: the spin keeps its previous value
                if ell == 0:
                    r_after[j] = s_init[s]
                    sp -= 1
                elif r_after[j - 1] >= 0:
                    r_after[j] = r_after[j - 1]
                    sp -= 1
                else:
                    if sp == stack_s.shape[0]:
                        stack_s = _grow_f(stack_s, 2 * sp)
                        stack_l = _grow_f(stack_l, 2 * sp)
                    stack_s[sp] = s
                    stack_l[sp] = ell - 1
                    sp += 1
            s0 = slots[lin]
            if target_ell < 0:
                out[ti, qi] = s_init[s0]
            else:
                out[ti, qi] = r_after[s_start[s0] + target_ell]
    return out, n_rings
