"""Exact analysis of the finite-volume generator.

States are indexed by the bit-packed encoding of :meth:`SpinConfig.encode`
(bit ``i`` is the spin of the ``i``-th site in lexicographic order).  The
generator is reversible w.r.t. the product Bernoulli(p) measure, so with
``D = diag(pi)`` the matrix ``D^{1/2} K D^{-1/2}`` is symmetric; its
eigendecomposition gives the spectral gap and the whole semigroup.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.csgraph
import scipy.sparse.linalg

from .errors import ConfigurationError, NonErgodicError, SizeError
from .lattice import Box, BoundaryCondition, ModelParams, Region, geometry
from .serialize import to_json, write_csv

# size caps, in sites
MAX_GAP_SITES = 20
MAX_MATRIX_SITES = 12
DENSE_GAP_SITES = 12

CLAMP_TOL = 1e-12


@dataclass
class GeneratorMatrix:
    """Sparse rate matrix ``K`` (rows sum to zero) with its reversible measure."""

    region: Region
    bc: BoundaryCondition | None
    params: ModelParams
    K: sp.csr_matrix
    pi: np.ndarray

    @property
    def n_states(self) -> int:
        return self.pi.shape[0]

    @property
    def n_sites(self) -> int:
        return self.region.size

    def symmetrized(self) -> sp.csr_matrix:
        """``D^{1/2} K D^{-1/2}``."""
        s = np.sqrt(self.pi)
        return sp.diags(s) @ self.K @ sp.diags(1.0 / s)

    def is_irreducible(self) -> bool:
        n_comp, _ = scipy.sparse.csgraph.connected_components(self.K, directed=True, connection="strong")
        return n_comp == 1


def build_generator(region: Region, bc: BoundaryCondition | None, params: ModelParams,
                    *, max_sites: int = MAX_GAP_SITES) -> GeneratorMatrix:
    """Assemble the rate matrix of the process on ``region`` with boundary ``bc``.

    ``K[eta, eta^x] = c_x(eta) * (q if eta(x) == 1 else p)``.
    """
    n = region.size
    if n > max_sites:
        raise SizeError(f"{n} sites exceed the generator cap of {max_sites}")
    geo = geometry(region)
    if geo.boundary and (bc is None or bc.sites != geo.boundary):
        raise ConfigurationError("boundary condition does not match the region")
    n_states = 1 << n
    states = np.arange(n_states, dtype=np.int64)
    bits = [((states >> i) & 1).astype(bool) for i in range(n)]
    p, q = params.p, params.q
    rows, cols, vals = [], [], []
    for i in range(n):
        free = np.zeros(n_states, dtype=bool)
        for j in range(geo.dim):
            k = int(geo.down[i, j])
            if k < n:
                free |= ~bits[k]
            elif bc.values[k - n] == 0:
                free[:] = True
        src = states[free]
        rate = np.where(bits[i][free], q, p)
        rows.append(src)
        cols.append(src ^ (1 << i))
        vals.append(rate)
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.empty(0)
    off = sp.csr_matrix((vals, (rows, cols)), shape=(n_states, n_states))
    out_rate = np.asarray(off.sum(axis=1)).ravel()
    K = (off - sp.diags(out_rate)).tocsr()
    ones = np.zeros(n_states)
    for i in range(n):
        ones += bits[i]
    pi = p**ones * q ** (n - ones)
    return GeneratorMatrix(region, bc, params, K, pi)


def check_detailed_balance(gen: GeneratorMatrix) -> float:
    """``max |pi(a) K(a, b) - pi(b) K(b, a)|`` over all pairs."""
    flow = sp.diags(gen.pi) @ gen.K
    diff = (flow - flow.T).tocoo()
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


def stationarity_defect(gen: GeneratorMatrix) -> float:
    """``||pi K||_inf``."""
    return float(np.max(np.abs(gen.K.T @ gen.pi)))


@dataclass(frozen=True)
class SpectralSummary:
    gap: float
    eigenvalues: np.ndarray | None = field(default=None, repr=False)

    @property
    def relaxation_time(self) -> float:
        return 1.0 / self.gap


def _ergodic_or_raise(gen: GeneratorMatrix) -> None:
    if isinstance(gen.region, Box) and gen.bc is not None and not gen.bc.classification.ergodic:
        raise NonErgodicError("spectral gap requested for a non-ergodic boundary condition")


def spectral_gap(gen: GeneratorMatrix, *, method: str = "auto", tol: float = 1e-13) -> SpectralSummary:
    """Minus the second largest eigenvalue of the symmetrized generator.

    ``method`` is ``"dense"`` (full symmetric eigensolver), ``"sparse"``
    (Lanczos on the generator deflated along ``sqrt(pi)``) or ``"auto"``,
    which picks dense up to ``2**DENSE_GAP_SITES`` states.
    """
    _ergodic_or_raise(gen)
    if method == "auto":
        method = "dense" if gen.n_sites <= DENSE_GAP_SITES else "sparse"
    if gen.n_states == 1:
        raise ConfigurationError("state space has a single state")
    S = gen.symmetrized()
    if method == "dense":
        ev = scipy.linalg.eigh(S.toarray(), eigvals_only=True)
        ev = np.sort(ev)[::-1]
        if ev[1] > -1e-10:
            raise NonErgodicError("zero eigenvalue is degenerate: generator is reducible")
        return SpectralSummary(float(-ev[1]), ev)
    if method != "sparse":
        raise ConfigurationError(f"unknown method {method!r}")
    v = np.sqrt(gen.pi)
    shift = 2.0 * float(np.max(np.abs(S.diagonal()))) + 1.0

    def matvec(x):
        x = np.ravel(x)
        return S @ x - shift * v * (v @ x)

    op = scipy.sparse.linalg.LinearOperator(S.shape, matvec=matvec, dtype=float)
    rng = np.random.default_rng(0)
    top = scipy.sparse.linalg.eigsh(op, k=1, which="LA", tol=tol, v0=rng.standard_normal(gen.n_states),
                                    return_eigenvectors=False)
    gap = float(-top[0])
    if gap <= 1e-10:
        raise NonErgodicError("zero eigenvalue is degenerate: generator is reducible")
    return SpectralSummary(gap)


class Semigroup:
    """``e^{tK}`` through one eigendecomposition of the symmetrized generator."""

    def __init__(self, gen: GeneratorMatrix, *, max_sites: int = MAX_MATRIX_SITES):
        if gen.n_sites > max_sites:
            raise SizeError(f"{gen.n_sites} sites exceed the transition-matrix cap of {max_sites}")
        self.gen = gen
        self.eigenvalues, self.eigenvectors = scipy.linalg.eigh(gen.symmetrized().toarray())
        self._sqrt_pi = np.sqrt(gen.pi)
        self.clamped = 0

    def transition_matrix(self, t: float) -> np.ndarray:
        """Row-stochastic ``P_t``; tiny negative round-off is clamped to zero."""
        if t < 0:
            raise ConfigurationError("time must be non-negative")
        V = self.eigenvectors
        S_t = (V * np.exp(t * self.eigenvalues)) @ V.T
        P = S_t * (self._sqrt_pi[None, :] / self._sqrt_pi[:, None])
        neg = P < 0
        if np.any(neg):
            worst = float(-P[neg].min())
            if worst > CLAMP_TOL:
                raise ArithmeticError(f"transition matrix entry {-worst:.3e} is too negative")
            self.clamped += int(neg.sum())
            P[neg] = 0.0
        return P

    def row(self, state: int, t: float) -> np.ndarray:
        V = self.eigenvectors
        s = (V[state] * np.exp(t * self.eigenvalues)) @ V.T
        out = s * self._sqrt_pi / self._sqrt_pi[state]
        return np.where((out < 0) & (out > -CLAMP_TOL), 0.0, out)

    def distance(self, t: float) -> float:
        """Worst-case total-variation distance to ``pi`` at time ``t``."""
        P = self.transition_matrix(t)
        return float(0.5 * np.max(np.abs(P - self.gen.pi[None, :]).sum(axis=1)))


def transition_matrix(gen: GeneratorMatrix, t: float) -> np.ndarray:
    return Semigroup(gen).transition_matrix(t)


@dataclass
class MixingCurve:
    times: np.ndarray
    distances: np.ndarray
    mixing_time: float | None = None


def tv_curve(gen: GeneratorMatrix, times: Sequence[float], *, semigroup: Semigroup | None = None,
             threshold: float = 0.25) -> MixingCurve:
    sg = semigroup or Semigroup(gen)
    times = np.asarray(times, dtype=float)
    dist = np.array([sg.distance(t) for t in times])
    return MixingCurve(times, dist, mixing_time(gen, threshold, semigroup=sg))


def mixing_time(gen: GeneratorMatrix, threshold: float = 0.25, *, semigroup: Semigroup | None = None,
                rtol: float = 1e-6) -> float:
    """First time the worst-case TV distance drops to ``threshold``.

    The distance is non-increasing for reversible chains; a coarse grid is
    checked for monotonicity before bisecting.
    """
    if not 0.0 < threshold < 1.0:
        raise ConfigurationError("threshold must lie in (0, 1)")
    sg = semigroup or Semigroup(gen)
    if sg.distance(0.0) <= threshold:
        return 0.0
    hi = 0.5
    grid = [sg.distance(0.0)]
    while True:
        dh = sg.distance(hi)
        if dh > grid[-1] + 1e-12:
            raise ArithmeticError("TV distance is not monotone along the pre-scan grid")
        grid.append(dh)
        if dh <= threshold:
            break
        hi *= 2.0
        if hi > 1e9:
            raise ArithmeticError("TV distance never reached the threshold")
    lo = hi / 2.0 if hi > 0.5 else 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if sg.distance(mid) <= threshold:
            hi = mid
        else:
            lo = mid
    return hi


# ----------------------------------------------------------------------------
# monotonicity of the gap


@dataclass
class GapRow:
    shape: tuple
    bc_label: str
    boundary: str
    ergodic: bool
    gap: float


@dataclass
class MonotonicityReport:
    rows: list
    size_checks: list
    boundary_checks: list
    slack: float

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.size_checks) and all(c["ok"] for c in self.boundary_checks)


def _gap_or_zero(region, bc, params) -> float:
    if not bc.classification.ergodic:
        return 0.0
    return spectral_gap(build_generator(region, bc, params)).gap


def gap_monotonicity_report(shapes: Sequence[tuple], params: ModelParams, *,
                            families: Sequence[str] = ("minimal", "maximal"),
                            all_boundaries: bool = True, slack: float = 1e-12,
                            max_sites: int = 14) -> MonotonicityReport:
    """Check that the gap does not grow with the box or with the boundary spins.

    ``shapes`` are side lengths of boxes ``prod_i [1, l_i]``.  Growth in a
    side is compared within each named boundary family; boundary
    monotonicity compares every pair of boundary conditions on one box
    that differ by a single 0 -> 1 flip (when ``all_boundaries``).
    """
    rows, size_checks, boundary_checks = [], [], []
    gaps = {}
    shapes = [tuple(int(v) for v in s) for s in shapes]
    for shape in shapes:
        region = Box((1,) * len(shape), shape)
        if region.size > max_sites:
            raise SizeError(f"box {shape} exceeds {max_sites} sites")
        for fam in families:
            if fam.startswith("minimal-") and int(fam.split("-")[1]) > len(shape):
                continue
            bc = BoundaryCondition.named(region, fam)
            g = _gap_or_zero(region, bc, params)
            gaps[(shape, fam)] = g
            rows.append(GapRow(shape, fam, "".join(map(str, bc.values)), bc.classification.ergodic, g))
    for shape in shapes:
        for i in range(len(shape)):
            bigger = shape[:i] + (shape[i] + 1,) + shape[i + 1 :]
            for fam in families:
                if (shape, fam) in gaps and (bigger, fam) in gaps:
                    g0, g1 = gaps[(shape, fam)], gaps[(bigger, fam)]
                    size_checks.append({"from": shape, "to": bigger, "family": fam, "gap_from": g0,
                                        "gap_to": g1, "ok": g1 <= g0 + slack})
    if all_boundaries:
        for shape in shapes:
            region = Box((1,) * len(shape), shape)
            nb = len(BoundaryCondition.maximal(region))
            cache = {}
            for values in itertools.product((0, 1), repeat=nb):
                bc = BoundaryCondition(region, values)
                cache[values] = _gap_or_zero(region, bc, params)
            for values, g in cache.items():
                for b in range(nb):
                    if values[b] == 0:
                        up = values[:b] + (1,) + values[b + 1 :]
                        boundary_checks.append({"shape": shape, "from": "".join(map(str, values)),
                                                "to": "".join(map(str, up)), "gap_from": g,
                                                "gap_to": cache[up], "ok": cache[up] <= g + slack})
    return MonotonicityReport(rows, size_checks, boundary_checks, slack)


# ----------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ExactSummary:
    """Spectral and mixing numbers for one box and boundary condition.

    ``mixing_time`` is ``None`` above the transition-matrix size cap.
    """

    box: str
    bc: str
    q: float
    gap: float
    relaxation_time: float
    mixing_time: float | None

    def as_row(self) -> list:
        return [self.box, self.bc, self.q, self.gap, self.relaxation_time,
                "" if self.mixing_time is None else self.mixing_time]


EXACT_COLUMNS = ("box", "bc", "q", "gap", "T_rel", "T_mix")


def box_label(region: Box) -> str:
    """``[1,3]x[1,2]`` style description of a box."""
    return "x".join(f"[{a},{b}]" for a, b in zip(region.lo, region.hi))


def summarize(region: Box, bc_name: str, params: ModelParams, *,
              max_matrix_sites: int = MAX_MATRIX_SITES) -> ExactSummary:
    """Gap, relaxation time and (when small enough) mixing time of one instance."""
    gen = build_generator(region, BoundaryCondition.named(region, bc_name), params)
    spectrum = spectral_gap(gen)
    tmix = mixing_time(gen) if region.size <= max_matrix_sites else None
    return ExactSummary(box_label(region), bc_name, params.q, spectrum.gap, spectrum.relaxation_time, tmix)


def write_exact_csv(fh, summaries: Sequence[ExactSummary]) -> None:
    """One row per instance with columns :data:`EXACT_COLUMNS`."""
    write_csv(fh, EXACT_COLUMNS, [s.as_row() for s in summaries])


def write_exact_json(fh, summaries: Sequence[ExactSummary]) -> None:
    """JSON list of instances; floats to 17 significant digits."""
    fh.write(to_json([{"box": s.box, "bc": s.bc, "q": s.q, "gap": s.gap,
                       "T_rel": s.relaxation_time, "T_mix": s.mixing_time} for s in summaries]))
