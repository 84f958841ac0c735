"""Counter-based randomness for the graphical construction.

Every site owns an independent stream of clock rings and coin tosses.
The stream is a pure function of ``(seed, site coordinates, event index)``
so that it does not depend on which region is simulated, on how many
coupled copies share it, or on the order in which sites are visited.

The pseudo-random function is SplitMix64 evaluated at an arbitrary
counter: the stream base is obtained by hashing the seed together with a
key derived from the coordinates, and draw ``k`` of a stream is the
SplitMix64 output for state ``base + (k + 1) * golden``.

Draw ``2 * l`` of a site stream is the ``l``-th exponential inter-ring gap,
draw ``2 * l + 1`` is the uniform behind the ``l``-th coin.
"""

from __future__ import annotations

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

# domain tags separating the dynamics stream from auxiliary streams
TAG_DYNAMICS = np.uint64(0x0)
TAG_INITIAL = np.uint64(0xA5A5F00DCAFE1234)
TAG_REPLICATE = np.uint64(0x5EED5EED12345678)

MASK64 = (1 << 64) - 1


@nb.njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(inline="always")
def stream_base(seed, key, tag):
    return mix64(mix64(seed ^ tag) ^ key)


@nb.njit(inline="always")
def uniform(base, ctr):
    """Uniform in the open interval (0, 1) for draw ``ctr`` of a stream."""
    z = mix64(base + (np.uint64(ctr) + np.uint64(1)) * GOLDEN)
    return (np.float64(z >> _S11) + 0.5) * _TWO_M53


@nb.njit(inline="always")
def ring_gap(base, ell):
    return -np.log(uniform(base, 2 * ell))


@nb.njit(inline="always")
def coin(base, ell, p):
    return 1 if uniform(base, 2 * ell + 1) < p else 0


@nb.njit(cache=True)
def _site_keys(coords):
    n, d = coords.shape
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        h = mix64(np.uint64(d) * GOLDEN)
        for j in range(d):
            h = mix64(h ^ (np.uint64(coords[i, j]) + GOLDEN))
        out[i] = h
    return out


def site_keys(coords) -> np.ndarray:
    """Stream keys for an ``(n, d)`` array of integer site coordinates."""
    coords = np.ascontiguousarray(np.atleast_2d(np.asarray(coords, dtype=np.int64)))
    return _site_keys(coords)


@nb.njit(cache=True)
def _bases(seed, keys, tag):
    out = np.empty(keys.shape[0], dtype=np.uint64)
    for i in range(keys.shape[0]):
        out[i] = stream_base(seed, keys[i], tag)
    return out


def stream_bases(seed: int, keys: np.ndarray, tag=TAG_DYNAMICS) -> np.ndarray:
    return _bases(np.uint64(int(seed) & MASK64), keys, np.uint64(tag))


@nb.njit(cache=True)
def _stream(base, count, p):
    times = np.empty(count)
    coins = np.empty(count, dtype=np.int8)
    t = 0.0
    for ell in range(count):
        t += ring_gap(base, ell)
        times[ell] = t
        coins[ell] = coin(base, ell, p)
    return times, coins


def site_stream(seed: int, site, count: int, p: float):
    """First ``count`` clock rings and coins of ``site`` under ``seed``.

    Returns
    -------
    times : ndarray of float
        Strictly increasing ring times.
    coins : ndarray of int8
        Bernoulli(p) coin tosses, one per ring.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    key = site_keys(np.asarray(site, dtype=np.int64).reshape(1, -1))[0]
    base = np.uint64(stream_base(np.uint64(int(seed) & MASK64), key, TAG_DYNAMICS))
    return _stream(base, int(count), float(p))


@nb.njit(cache=True)
def _derive(seed, first, count):
    out = np.empty(count, dtype=np.uint64)
    base = mix64(seed ^ TAG_REPLICATE)
    for i in range(count):
        out[i] = mix64(base + (np.uint64(first + i) + np.uint64(1)) * GOLDEN)
    return out


def replicate_seeds(seed: int, count: int, first: int = 0) -> np.ndarray:
    """Per-replicate 64-bit seeds derived from a global seed.

    Replicate ``i`` always receives the same seed, whatever ``first`` and
    ``count`` are used to request it.
    """
    return _derive(np.uint64(int(seed) & MASK64), int(first), int(count))


@nb.njit(cache=True)
def _initial_uniforms(bases):
    out = np.empty(bases.shape[0])
    for i in range(bases.shape[0]):
        out[i] = uniform(bases[i], 0)
    return out
