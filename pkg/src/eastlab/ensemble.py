"""Many seeded replicates of one finite system, run in compiled batches.

Replicate ``r`` of an ensemble with global seed ``s`` uses the seed
``replicate_seeds(s, ...)[r]``, so results are indexed by replicate and do
not depend on how the work is split across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import _batch
from .engine import BernoulliLaw, _check_bc
from .errors import ConfigurationError
from .lattice import BoundaryCondition, ModelParams, Region, SpinConfig, geometry
from .rng import replicate_seeds

__all__ = ["Ensemble", "map_chunks"]


def map_chunks(fn: Callable[[np.ndarray], np.ndarray], seeds: np.ndarray, threads: int = 1,
               chunk: int | None = None) -> np.ndarray:
    """Apply ``fn`` to consecutive chunks of ``seeds`` and concatenate in order."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    threads = max(1, int(threads))
    if seeds.size == 0:
        return fn(seeds)
    if chunk is None:
        chunk = max(1, -(-seeds.size // (4 * threads)))
    parts = [seeds[i : i + chunk] for i in range(0, seeds.size, chunk)]
    if threads == 1 or len(parts) == 1:
        results = [fn(part) for part in parts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, parts))
    return np.concatenate(results, axis=0)


@dataclass
class Ensemble:
    """Independent replicates of the process on ``region`` with boundary ``bc``.

    Parameters
    ----------
    initial : SpinConfig or BernoulliLaw
        Fixed initial state, or a product law sampled per replicate.
    fixed : mapping, optional
        Sites whose initial spin is forced after sampling.
    """

    initial: SpinConfig | BernoulliLaw
    bc: BoundaryCondition | None
    params: ModelParams
    region: Region | None = None
    fixed: Mapping | None = None
    allow_non_ergodic: bool = False

    def __post_init__(self):
        if isinstance(self.initial, SpinConfig):
            self.region = self.initial.region
        elif self.region is None:
            raise ConfigurationError("a random initial law needs an explicit region")
        _check_bc(self.region, self.bc, self.allow_non_ergodic)
        self._geo = geometry(self.region)
        base = self.initial if isinstance(self.initial, SpinConfig) else SpinConfig.zeros(self.region)
        self._ext0 = self._geo.extended(base, self.bc)
        self._rho = float(self.initial.rho) if isinstance(self.initial, BernoulliLaw) else -1.0
        fixed = dict(self.fixed or {})
        self._force_idx = np.array([self.region.index(tuple(y)) for y in fixed], dtype=np.int64)
        self._force_val = np.array([int(v) for v in fixed.values()], dtype=np.int8)

    def _args(self):
        g = self._geo
        return self._ext0, g.down, g.keys

    def _seeds(self, seed: int, replicates: int, first: int = 0) -> np.ndarray:
        if replicates < 0:
            raise ConfigurationError("replicate count must be non-negative")
        return replicate_seeds(seed, replicates, first)

    def snapshots(self, times, seed: int, replicates: int, *, sites=None, first: int = 0,
                  threads: int = 1) -> np.ndarray:
        """Spins at ``sites`` (default: all, lexicographic) at each time.

        Returns an int8 array ``(replicates, len(times), len(sites))``.
        """
        times = np.asarray(times, dtype=float).reshape(-1)
        if np.any(np.diff(times) < 0) or np.any(times < 0):
            raise ConfigurationError("times must be sorted and non-negative")
        if sites is None:
            report = np.arange(self._geo.n, dtype=np.int64)
        else:
            report = np.array([self.region.index(tuple(y)) for y in sites], dtype=np.int64)
        ext0, down, keys = self._args()
        p = self.params.p

        def fn(chunk):
            return _batch.snapshots(ext0, down, keys, chunk, p, self._rho, self._force_idx,
                                    self._force_val, times, report)

        return map_chunks(fn, self._seeds(seed, replicates, first), threads)

    def hitting_times(self, site, horizon: float, seed: int, replicates: int, *, value: int = 0,
                      first: int = 0, threads: int = 1) -> np.ndarray:
        """First time ``site`` holds ``value``; ``inf`` marks runs censored at ``horizon``."""
        idx = self.region.index(tuple(site))
        ext0, down, keys = self._args()
        p = self.params.p

        def fn(chunk):
            return _batch.hitting(ext0, down, keys, chunk, p, self._rho, self._force_idx,
                                  self._force_val, float(horizon), idx, int(value))

        return map_chunks(fn, self._seeds(seed, replicates, first), threads)

    def occupation_times(self, site, times, seed: int, replicates: int, *, first: int = 0,
                         threads: int = 1) -> np.ndarray:
        """Time spent at 0 by ``site`` up to each of the sorted ``times``."""
        times = np.asarray(times, dtype=float).reshape(-1)
        if np.any(np.diff(times) < 0) or np.any(times < 0):
            raise ConfigurationError("times must be sorted and non-negative")
        idx = self.region.index(tuple(site))
        ext0, down, keys = self._args()
        p = self.params.p

        def fn(chunk):
            return _batch.occupation(ext0, down, keys, chunk, p, self._rho, self._force_idx,
                                     self._force_val, times, idx)

        return map_chunks(fn, self._seeds(seed, replicates, first), threads)
