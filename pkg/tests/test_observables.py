import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eastlab.engine import run
from eastlab.ensemble import Ensemble
from eastlab.errors import ConfigurationError, DomainError
from eastlab.lattice import BoundaryCondition, ModelParams, SpinConfig, box, cube, sample_pi
from eastlab.observables import (
    all_ones_box,
    event_G,
    front_position,
    hat_omega_check,
    hat_omega_length,
    in_hat_omega,
    longest_axis_run,
    occupation_time,
    persistence_time,
    write_observable_csv,
)
from eastlab.stats import fit_linear

PARAMS = ModelParams(0.5)


def free_site_run(initial, t, seed):
    region = cube(1, 1)
    return run(SpinConfig.from_array(region, [initial]), BoundaryCondition.maximal(region),
               PARAMS, t, seed=seed)


class TestOccupation:
    def test_matches_path(self):
        traj = free_site_run(1, 10.0, 3)
        times, values = traj.site_path((1,))
        ends = np.append(times[1:], 10.0)
        assert occupation_time(traj, (1,)) == pytest.approx(
            float(np.sum((ends - times)[values == 0])), abs=1e-12)

    @given(st.integers(0, 10_000), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
    def test_monotone_and_bounded(self, seed, a, b):
        traj = free_site_run(0, 10.0, seed)
        lo, hi = sorted((a, b))
        o_lo, o_hi = occupation_time(traj, (1,), lo), occupation_time(traj, (1,), hi)
        assert 0.0 <= o_lo <= o_hi <= o_lo + (hi - lo) + 1e-12

    def test_always_occupied(self):
        region = cube(2, 2)
        traj = run(SpinConfig.ones(region), BoundaryCondition.all_ones(region), PARAMS, 5.0, seed=0,
                   allow_non_ergodic=True)
        assert occupation_time(traj, (2, 2)) == 0.0

    def test_mean_matches_closed_form(self):
        # from a vacant start: E = q t + p (1 - e^{-t})
        t = 2.0
        vals = [occupation_time(free_site_run(0, t, s), (1,)) for s in range(4000)]
        exact = PARAMS.q * t + PARAMS.p * (1 - math.exp(-t))
        assert abs(np.mean(vals) - exact) < 4 * np.std(vals) / math.sqrt(len(vals))

    def test_time_beyond_horizon(self):
        with pytest.raises(ConfigurationError):
            occupation_time(free_site_run(0, 1.0, 0), (1,), 2.0)


class TestPersistence:
    def test_vacant_start_is_zero(self):
        sample = persistence_time(free_site_run(0, 1.0, 0), (1,))
        assert sample.time == 0.0 and not sample.censored

    def test_censored(self):
        region = cube(2, 2)
        traj = run(SpinConfig.ones(region), BoundaryCondition.all_ones(region), PARAMS, 5.0, seed=0,
                   allow_non_ergodic=True)
        assert persistence_time(traj, (1, 1)).censored

    def test_first_zero(self):
        traj = free_site_run(1, 50.0, 9)
        sample = persistence_time(traj, (1,))
        times, values = traj.site_path((1,))
        assert sample.time == times[np.argmax(values == 0)]


class TestGoodSet:
    def test_run_length(self):
        assert hat_omega_length(64) == 17
        assert hat_omega_length(64, log_base=2) == 36
        assert hat_omega_length(2) == 0

    def test_all_ones_row(self):
        region = cube(64, 1)
        check = hat_omega_check(SpinConfig.ones(region))
        assert not check.inside and check.longest_run == 64 and check.run_length == 17

    def test_periodic_vacancies(self):
        region = cube(64, 1)
        config = SpinConfig.from_array(region, np.arange(64) % 17 != 16)
        assert longest_axis_run(config) == 16
        assert in_hat_omega(config)
        config[(17,)] = 1
        assert not in_hat_omega(config)

    def test_two_dimensional_columns(self):
        region = cube(5, 2)
        config = SpinConfig.zeros(region)
        for j in range(1, 6):
            config[(3, j)] = 1
        assert longest_axis_run(config) == 5
        assert in_hat_omega(config, length=6) and not in_hat_omega(config, length=5)

    def test_vacuous(self):
        check = hat_omega_check(SpinConfig.ones(cube(2, 1)))
        assert check.vacuous and check.inside
        with pytest.raises(ConfigurationError):
            hat_omega_check(SpinConfig.ones(cube(1, 1)))

    @given(st.integers(0, 2**12 - 1), st.integers(1, 12))
    def test_monotone_in_length(self, index, length):
        config = SpinConfig.from_index(cube(12, 1), index)
        if in_hat_omega(config, length):
            assert in_hat_omega(config, length + 1)


def test_all_ones_box():
    region = box((0, 0), (3, 3))
    config = SpinConfig.ones(region)
    assert all_ones_box(config, (2, 2))
    inspected = SpinConfig.zeros(region)
    for y in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        inspected[y] = 1
    assert all_ones_box(inspected, (1, 1))
    config[(0, 0)] = 0
    assert not all_ones_box(config, (1, 1))
    config[(0, 0)] = 1
    config[(3, 0)] = 0
    assert all_ones_box(config, (2, 3))
    assert not all_ones_box(config, (3, 0))
    with pytest.raises(ConfigurationError):
        all_ones_box(config, (4, 1))


def test_front_position():
    region = cube(6, 1)
    assert front_position(SpinConfig.ones(region)) is None
    assert front_position(SpinConfig.from_array(region, [0, 1, 0, 1, 1, 1])) == 3
    with pytest.raises(DomainError):
        front_position(SpinConfig.ones(cube(2, 2)))


def test_front_advances_linearly():
    region = cube(200, 1)
    times = [100.0, 200.0, 400.0]
    snaps = Ensemble(SpinConfig.ones(region), BoundaryCondition.minimal(region), PARAMS).snapshots(
        times, seed=1, replicates=1000)
    medians = []
    for k in range(len(times)):
        pos = [front_position(SpinConfig.from_array(region, row)) or 0 for row in snaps[:, k]]
        medians.append(float(np.median(pos)))
    slopes = np.diff(medians) / np.diff(times)
    assert np.all(slopes > 0)
    assert abs(slopes[1] - slopes[0]) <= 0.1 * slopes[0]
    assert fit_linear([0.0] + times, [0.0] + medians).goodness["r2"] > 0.99


def test_good_event_is_likely():
    # one dimension, origin vacant at time 0, product law elsewhere
    region = box((-40,), (0,))
    bc = BoundaryCondition.minimal(region)
    rng = np.random.default_rng(0)
    hits = 0
    for seed in range(1000):
        config = sample_pi(region, PARAMS, rng)
        config[(0,)] = 0
        traj = run(config, bc, PARAMS, 50.0, seed=seed)
        hits += event_G(traj, 5).occurred
    assert hits >= 990


def test_good_event_with_unit_window():
    traj = free_site_run(0, 20.0, 2)
    full = occupation_time(traj, (1,)) >= 20.0
    assert event_G(traj, 1, origin=(1,)).occurred == full


def test_good_event_on_frozen_zeros():
    region = box((-3, -3), (0, 0))
    traj = run(SpinConfig.zeros(region), BoundaryCondition.maximal(region), PARAMS, 1e-12, seed=0)
    assert len(traj) == 0
    event = event_G(traj, 3)
    assert event.occurred and event.xi == (-2, -2)


def test_occupation_is_horizon_minus_occupied_time():
    region = cube(5, 1)
    traj = run(SpinConfig.ones(region), BoundaryCondition.minimal(region), PARAMS, 1000.0, seed=3)
    times, values = traj.site_path((5,))
    ends = np.append(times[1:], 1000.0)
    occupied = math.fsum((ends - times)[values == 1])
    assert abs(occupation_time(traj, (5,)) - (1000.0 - occupied)) <= 1e-9 * 1000.0


@given(st.integers(0, 10_000), st.integers(0, 2**6 - 1))
def test_persistence_is_first_legal_zero_coin(seed, index):
    region = cube(6, 1)
    config = SpinConfig.from_index(region, index | (1 << 5))
    traj = run(config, BoundaryCondition.minimal(region), PARAMS, 30.0, seed=seed)
    sample = persistence_time(traj, (6,))
    k = region.index((6,))
    hits = np.flatnonzero((traj.sites == k) & traj.legal & (traj.coins == 0))
    if hits.size:
        assert sample.time == traj.times[hits[0]]
    else:
        assert sample.censored


def test_good_event_window_must_fit():
    region = cube(3, 2)
    traj = run(SpinConfig.ones(region), BoundaryCondition.minimal(region), PARAMS, 1.0, seed=0)
    with pytest.raises(ConfigurationError):
        event_G(traj, 5, origin=(3, 3))


def test_csv_formatting():
    buf = io.StringIO()
    write_observable_csv(buf, ["site", "time", "flag"], [((1, 2), 0.1, np.bool_(True))])
    assert buf.getvalue() == "site,time,flag\n1 2,0.10000000000000001,True\n"
