import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from eastlab.engine import (
    BernoulliLaw,
    buffer_width,
    run,
    run_buffered_infinite,
    run_coupled,
    sample_buffered,
)
from eastlab.ensemble import Ensemble
from eastlab.errors import ConfigurationError, NonErgodicError
from eastlab.exact import Semigroup, build_generator
from eastlab.lattice import (
    BoundaryCondition,
    ModelParams,
    SpinConfig,
    all_configs,
    constraint,
    cube,
    window,
)

PARAMS = ModelParams(0.3)


def test_zero_horizon_returns_initial():
    region = cube(3, 2)
    init = SpinConfig.from_index(region, 0b101010101)
    traj = run(init, BoundaryCondition.minimal(region), PARAMS, 0.0, seed=1)
    assert traj.final == init and len(traj) == 0


def test_negative_horizon_rejected():
    region = cube(2, 1)
    with pytest.raises(ConfigurationError):
        run(SpinConfig.ones(region), BoundaryCondition.minimal(region), PARAMS, -1.0, seed=1)


def test_non_ergodic_boundary_rejected():
    region = cube(2, 2)
    with pytest.raises(NonErgodicError):
        run(SpinConfig.ones(region), BoundaryCondition.all_ones(region), PARAMS, 1.0, seed=1)
    traj = run(SpinConfig.ones(region), BoundaryCondition.all_ones(region), PARAMS, 5.0, seed=1,
               allow_non_ergodic=True)
    assert not traj.legal.any()


def test_deterministic_given_seed():
    region = cube(4, 2)
    init = SpinConfig.ones(region)
    bc = BoundaryCondition.minimal(region)
    a = run(init, bc, PARAMS, 20.0, seed=99)
    b = run(init, bc, PARAMS, 20.0, seed=99)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.values, b.values)
    assert a.final == b.final


@given(st.integers(0, 2**40), st.integers(0, 2**9 - 1), st.sampled_from(["minimal", "maximal"]))
def test_rings_follow_the_constraint(seed, index, bc_name):
    region = cube(3, 2)
    init = SpinConfig.from_index(region, index)
    bc = BoundaryCondition.named(region, bc_name)
    traj = run(init, bc, PARAMS, 4.0, seed=seed)
    state = init.copy()
    assert np.all(np.diff(traj.times) > 0)
    for (t, x, legal, value), c in zip(traj.events(), traj.coins):
        assert legal == constraint(x, state, bc)
        if legal:
            assert value == c
            state[x] = value
        else:
            assert value == state[x]
    assert state == traj.final
    assert traj.state_at(math.inf) == traj.final


def test_single_site_closed_form():
    # one site with a vacant boundary neighbour is a free two-state chain
    region = cube(1, 1)
    ens = Ensemble(SpinConfig.zeros(region), BoundaryCondition.maximal(region), PARAMS)
    t = 0.7
    snaps = ens.snapshots([t], seed=3, replicates=100_000)
    exact = PARAMS.p * (1 - math.exp(-t))
    se = math.sqrt(exact * (1 - exact) / snaps.shape[0])
    assert abs(snaps.mean() - exact) < 4 * se


def test_two_by_two_box_matches_exact_transition_row():
    region = cube(2, 2)
    bc = BoundaryCondition.minimal(region)
    gen = build_generator(region, bc, PARAMS)
    sg = Semigroup(gen)
    init = SpinConfig.ones(region)
    t = 1.5
    snaps = Ensemble(init, bc, PARAMS).snapshots([t], seed=17, replicates=50_000)[:, 0, :]
    codes = (snaps.astype(np.int64) << np.arange(region.size)).sum(axis=1)
    observed = np.bincount(codes, minlength=2**region.size)
    expected = sg.row(init.encode(), t) * snaps.shape[0]
    keep = expected > 5
    stat, pvalue = sps.chisquare(observed[keep], expected[keep] * observed[keep].sum() / expected[keep].sum())
    assert pvalue > 1e-3
    assert observed[~keep].sum() < 50


def test_ensemble_matches_single_runs():
    region = cube(3, 1)
    init = SpinConfig.ones(region)
    bc = BoundaryCondition.minimal(region)
    from eastlab.rng import replicate_seeds

    seeds = replicate_seeds(8, 20)
    snaps = Ensemble(init, bc, PARAMS).snapshots([2.0, 5.0], seed=8, replicates=20)
    for r, s in enumerate(seeds):
        traj = run(init, bc, PARAMS, 5.0, seed=int(s))
        assert np.array_equal(snaps[r, 0], traj.state_at(2.0).to_array())
        assert np.array_equal(snaps[r, 1], traj.final.to_array())


def test_hitting_time_of_free_site():
    region = cube(1, 1)
    ens = Ensemble(SpinConfig.ones(region), BoundaryCondition.maximal(region), PARAMS)
    times = ens.hitting_times((1,), horizon=1e6, seed=5, replicates=100_000)
    assert np.all(np.isfinite(times))
    se = times.std() / math.sqrt(times.size)
    assert abs(times.mean() - 1 / PARAMS.q) < 4 * se


def test_occupation_of_free_site():
    # E[zero time up to t | start at 1] = q t - q (1 - e^{-t})
    region = cube(1, 1)
    ens = Ensemble(SpinConfig.ones(region), BoundaryCondition.maximal(region), PARAMS)
    t = 3.0
    occ = ens.occupation_times((1,), [t], seed=6, replicates=100_000)[:, 0]
    exact = PARAMS.q * t - PARAMS.q * (1 - math.exp(-t))
    assert abs(occ.mean() - exact) < 4 * occ.std() / math.sqrt(occ.size)


def test_stationary_density_is_preserved():
    region = cube(6, 2)
    ens = Ensemble(BernoulliLaw(PARAMS.p), BoundaryCondition.minimal(region), PARAMS, region=region)
    snaps = ens.snapshots([0.0, 5.0], seed=2, replicates=4000)
    for k in range(2):
        dens = snaps[:, k, :].mean()
        se = math.sqrt(PARAMS.p * PARAMS.q / snaps[:, k, :].size)
        assert abs(dens - PARAMS.p) < 5 * se


def test_stream_is_independent_of_region():
    # a prefix of an interval evolves identically inside a longer interval
    short, long_ = cube(3, 1), cube(6, 1)
    bc_s, bc_l = BoundaryCondition.minimal(short), BoundaryCondition.minimal(long_)
    for seed in range(20):
        a = run(SpinConfig.ones(short), bc_s, PARAMS, 10.0, seed=seed)
        b = run(SpinConfig.ones(long_), bc_l, PARAMS, 10.0, seed=seed)
        assert np.array_equal(a.final.to_array(), b.final.to_array()[:3])


def test_coupling_of_all_initial_states():
    region = cube(2, 2)
    bc = BoundaryCondition.minimal(region)
    initials = list(all_configs(region))
    coalesced = 0
    for seed in range(100):
        res = run_coupled(initials, bc, PARAMS, 200.0, seed=seed)
        assert res.violations == 0
        coalesced += res.coalesced
        for init, final in zip(initials[:3], res.finals[:3]):
            assert run(init, bc, PARAMS, 200.0, seed=seed).final == final
    assert coalesced >= 99


def test_write_jsonl():
    region = cube(2, 1)
    traj = run(SpinConfig.ones(region), BoundaryCondition.minimal(region), PARAMS, 3.0, seed=4)
    buf = io.StringIO()
    traj.write_jsonl(buf)
    lines = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert len(lines) == len(traj)
    if lines:
        assert set(lines[0]) == {"time", "site", "legal", "value"}
        assert lines[0]["time"] == float(traj.times[0])


class TestBuffer:
    def test_width_examples(self):
        assert buffer_width(1, 10.0, 1e-9) == 44
        assert buffer_width(2, 64.0, 1e-9) == 369
        assert buffer_width(2, 0.0, 1e-9) == 0

    @given(st.integers(1, 3), st.floats(0.1, 100.0), st.floats(1e-12, 0.5))
    def test_width_is_minimal(self, d, t, eps):
        k = buffer_width(d, t, eps)
        bound = lambda k: k * (math.log(d * math.e * t) - math.log(k))  # noqa: E731
        assert bound(k) <= math.log(eps) + 1e-9
        if k > math.ceil(d * math.e * t):
            assert bound(k - 1) > math.log(eps)

    def test_forward_and_lazy_agree(self):
        win = window(4, 2, origin=(10, 10))
        law = BernoulliLaw(0.6)
        for seed in range(10):
            fwd = sample_buffered(win, law, PARAMS, [0.0, 1.0, 3.0], 1e-6, seed, method="forward")
            lazy = sample_buffered(win, law, PARAMS, [0.0, 1.0, 3.0], 1e-6, seed, method="lazy")
            assert np.array_equal(fwd, lazy)

    def test_wider_buffer_changes_nothing(self):
        win = window(5, 2)
        law = BernoulliLaw(0.9)
        t = 4.0
        k = buffer_width(2, t, 1e-9)
        for seed in range(30):
            a = sample_buffered(win, law, PARAMS, [t], 1e-9, seed)
            b = sample_buffered(win, law, PARAMS, [t], 1e-9, seed, width=k + 10)
            assert np.array_equal(a, b)

    def test_single_snapshot(self):
        win = window(3, 1)
        cfg = run_buffered_infinite(win, BernoulliLaw(1.0), PARAMS, 0.0, 1e-9, seed=1)
        assert cfg == SpinConfig.ones(win)

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            sample_buffered(window(2, 1), BernoulliLaw(0.5), PARAMS, [1.0], 1e-3, 0, method="magic")


def test_bottom_row_of_quadrant_is_one_dimensional():
    # minimal boundary: the row x_2 = 0 only sees the vacancy at (-1, 0)
    from eastlab.lattice import down_box
    from eastlab.stats import chi_square_two_sample

    plane, line = down_box((3, 3)), down_box((3,))
    assert BoundaryCondition.minimal(plane)[(-1, 0)] == 0
    t = 2.0
    snaps2 = Ensemble(SpinConfig.ones(plane), BoundaryCondition.minimal(plane), PARAMS).snapshots(
        [t], seed=1, replicates=40_000, sites=[(i, 0) for i in range(4)])[:, 0, :]
    snaps1 = Ensemble(SpinConfig.ones(line), BoundaryCondition.minimal(line), PARAMS).snapshots(
        [t], seed=2, replicates=40_000)[:, 0, :]
    weights = 1 << np.arange(4)
    counts2 = np.bincount(snaps2.astype(np.int64) @ weights, minlength=16)
    counts1 = np.bincount(snaps1.astype(np.int64) @ weights, minlength=16)
    assert chi_square_two_sample(counts1, counts2).pvalue > 1e-3
