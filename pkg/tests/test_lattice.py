import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eastlab.errors import ConfigurationError, DomainError, SizeError
from eastlab.lattice import (
    Box,
    BoundaryCondition,
    ModelParams,
    SiteSet,
    SpinConfig,
    all_configs,
    box,
    class_of,
    classify_boundary,
    constraint,
    cube,
    down_box,
    east_boundary,
    geometry,
    in_down_quadrant,
    in_up_quadrant,
    l1_norm,
    pi_weight,
    sample_pi,
    window,
)

sites2 = st.tuples(st.integers(-5, 5), st.integers(-5, 5))


def brute_boundary(region):
    members = set(region.sites())
    d = region.dim
    out = set()
    for y in members:
        for i in range(d):
            z = list(y)
            z[i] -= 1
            z = tuple(z)
            if z not in members:
                out.add(z)
    return sorted(out)


class TestGeometry:
    def test_l1_norm(self):
        assert l1_norm((3, -4, 0)) == 7

    @given(st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=2, max_size=2))
    def test_lexicographic_total_order(self, pair):
        a, b = pair
        assert (a < b) + (b < a) + (a == b) == 1

    def test_quadrants(self):
        assert in_up_quadrant((2, 3), (1, 3))
        assert not in_up_quadrant((1, 3), (1, 3))
        assert in_down_quadrant((0, 0), (1, 1))

    def test_boundary_singleton(self):
        assert east_boundary(SiteSet(tuple([(2, 5)]))) == [(1, 5), (2, 4)]

    def test_boundary_interval(self):
        assert east_boundary(cube(7, 1)) == [(0,)]

    def test_boundary_square(self):
        assert east_boundary(box((1, 1), (2, 2))) == [(0, 1), (0, 2), (1, 0), (2, 0)]

    @pytest.mark.parametrize("d,L", [(d, L) for d in (1, 2, 3) for L in range(1, 9) if L**d <= 512])
    def test_boundary_size_of_cubes(self, d, L):
        region = cube(L, d)
        bnd = east_boundary(region)
        assert len(bnd) == d * L ** (d - 1)
        assert bnd == brute_boundary(region)
        assert not set(bnd) & set(region.sites())

    @given(st.sets(sites2, min_size=1, max_size=12))
    def test_boundary_of_site_sets(self, members):
        region = SiteSet(tuple(members))
        assert east_boundary(region) == brute_boundary(region)

    def test_empty_box_rejected(self):
        with pytest.raises(ConfigurationError):
            Box((2, 1), (1, 1))

    def test_size_cap(self):
        with pytest.raises(SizeError):
            cube(2**16, 2)

    def test_box_indexing_is_lexicographic(self):
        region = box((0, -1), (2, 1))
        sites = region.sites()
        assert sites == sorted(sites)
        for i, y in enumerate(sites):
            assert region.index(y) == i
            assert region.site(i) == y
        assert np.array_equal(region.coords(), np.array(sites))

    def test_window_and_down_box(self):
        assert window(3, 2).lo == (-2, -2) and window(3, 2).hi == (0, 0)
        assert down_box((2, 2, 2)).size == 27

    def test_class_of(self):
        assert class_of((3, 5)) == 3
        assert class_of((0, 7)) == 0
        assert class_of((2, 2, 2)) == 2
        with pytest.raises(DomainError):
            class_of((-1, 4))


class TestSpinConfig:
    @given(st.integers(1, 5), st.data())
    def test_encode_round_trip(self, n, data):
        region = cube(n, 2)
        index = data.draw(st.integers(0, 2**region.size - 1))
        config = SpinConfig.from_index(region, index)
        assert config.encode() == index
        assert SpinConfig.from_array(region, config.to_array()) == config

    @given(st.integers(0, 2**9 - 1), st.integers(0, 8))
    def test_flip_changes_one_site(self, index, k):
        region = cube(3, 2)
        config = SpinConfig.from_index(region, index)
        x = region.site(k)
        flipped = config.flipped(x)
        diff = np.flatnonzero(config.to_array() != flipped.to_array())
        assert diff.tolist() == [k]

    def test_grid_layout(self):
        region = box((1, 1), (2, 3))
        config = SpinConfig.zeros(region)
        config[(2, 1)] = 1
        assert config.as_grid()[1, 0] == 1
        assert config.n_ones == 1 and config.n_zeros == 5


class TestBoundaryConditions:
    def test_single_corner_vacancy_is_minimal(self):
        region = cube(3, 2)
        c = BoundaryCondition.minimal(region).classification
        assert c.ergodic and c.minimal and not c.maximal

    def test_all_ones_not_ergodic(self):
        assert not BoundaryCondition.all_ones(cube(3, 2)).classification.ergodic

    def test_all_zeros_maximal(self):
        c = BoundaryCondition.maximal(cube(3, 2)).classification
        assert c.ergodic and c.maximal

    @pytest.mark.parametrize("shape", [(2,), (4,), (2, 2), (2, 3), (1, 1, 2)])
    def test_minimal_loses_ergodicity_without_its_vacancy(self, shape):
        region = box((1,) * len(shape), shape)
        n = len(east_boundary(region))
        for values in itertools.product((0, 1), repeat=n):
            bc = BoundaryCondition(region, values)
            c = classify_boundary(bc)
            if c.maximal:
                assert all(v == 0 for v in values)
            if c.minimal:
                for k in np.flatnonzero(np.array(values) == 0):
                    filled = list(values)
                    filled[k] = 1
                    assert not classify_boundary(BoundaryCondition(region, filled)).ergodic

    def test_named(self):
        region = cube(2, 2)
        assert BoundaryCondition.named(region, "minimal-2")[(1, 0)] == 0
        with pytest.raises(ConfigurationError):
            BoundaryCondition.named(region, "periodic")


class TestConstraint:
    def test_one_dimensional(self):
        region = cube(3, 1)
        config = SpinConfig.from_array(region, [0, 1, 1])
        bc = BoundaryCondition.all_ones(region)
        assert constraint((2,), config, bc)
        assert not constraint((3,), config, bc)

    def test_origin_with_maximal_boundary(self):
        region = cube(4, 2)
        assert constraint((1, 1), SpinConfig.ones(region), BoundaryCondition.maximal(region))

    def test_blocked_in_two_dimensions(self):
        region = cube(3, 2)
        assert not constraint((2, 2), SpinConfig.ones(region), BoundaryCondition.maximal(region))

    def test_missing_neighbour(self):
        region = SiteSet(tuple([(1, 1)]))
        with pytest.raises(ConfigurationError):
            constraint((1, 1), SpinConfig.ones(region), None)

    @given(st.integers(0, 2**9 - 1), st.integers(0, 2**6 - 1), st.integers(0, 8))
    def test_never_reads_own_spin(self, index, bvals, k):
        region = cube(3, 2)
        config = SpinConfig.from_index(region, index)
        bc = BoundaryCondition(region, [(bvals >> j) & 1 for j in range(6)])
        x = region.site(k)
        assert constraint(x, config, bc) == constraint(x, config.flipped(x), bc)


class TestEquilibrium:
    def test_weight(self):
        config = SpinConfig.from_array(cube(3, 1), [1, 0, 1])
        assert pi_weight(config, ModelParams(0.3)) == pytest.approx(0.147, abs=1e-15)

    def test_empty_product(self):
        assert pi_weight(SpinConfig.zeros(SiteSet(tuple([]))), ModelParams(0.3)) == 1.0

    @pytest.mark.parametrize("shape", [(1,), (5,), (2, 2), (3, 4)])
    def test_normalization(self, shape):
        region = box((1,) * len(shape), shape)
        params = ModelParams(0.37)
        total = math.fsum(pi_weight(c, params) for c in all_configs(region))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_sampler_marginals(self):
        params = ModelParams(0.3)
        region = cube(50, 2)
        config = sample_pi(region, params, np.random.default_rng(1))
        assert abs(config.n_ones / region.size - 0.7) < 4 * math.sqrt(0.21 / region.size)

    def test_params(self):
        with pytest.raises(ConfigurationError):
            ModelParams(1.0)
        assert ModelParams(0.25).p + ModelParams(0.25).q == 1


def test_geometry_down_table():
    region = box((1, 1), (2, 3))
    geo = geometry(region)
    for i, x in enumerate(region.sites()):
        for j in range(2):
            y = list(x)
            y[j] -= 1
            y = tuple(y)
            k = geo.down[i, j]
            target = region.site(k) if k < geo.n else geo.boundary[k - geo.n]
            assert target == y
