"""
Tests for the distribution model and distribution algebra.
"""

import numpy as np
import pytest
from scipy import stats

from src.analysis import dist
from src.core.errors import DomainError
from src.core.utils import make_rng
from src.models.distribution import Distribution, Instance, ParametricDistribution


class TestDistribution:
    """Test construction and canonical form."""

    def test_from_atoms_sorts_and_merges(self):
        d = Distribution.from_atoms([1.0, 0.0, 1.0, 2.0], [0.25, 0.25, 0.25, 0.25])
        assert d.atoms() == [(0.0, 0.25), (1.0, 0.5), (2.0, 0.25)]

    def test_from_atoms_drops_zero_mass(self):
        d = Distribution.from_atoms([0.0, 3.0], [1.0, 0.0])
        assert d.support_size == 1
        assert d.mean == 0.0

    @pytest.mark.parametrize(
        "values, masses",
        [
            ([0.0, 1.0], [0.5, 0.4]),
            ([-1.0, 1.0], [0.5, 0.5]),
            ([0.0, 1.0], [1.5, -0.5]),
            ([], []),
        ],
    )
    def test_from_atoms_rejects_invalid(self, values, masses):
        with pytest.raises(DomainError):
            Distribution.from_atoms(values, masses)

    def test_equality_and_hash(self, coin):
        other = Distribution.from_atoms([1.0, 0.0], [0.5, 0.5], "other label")
        assert coin == other
        assert hash(coin) == hash(other)
        assert coin != Distribution.point_mass(1.0)

    def test_mean_and_expected_max_with(self, coin):
        assert coin.mean == 0.5
        assert coin.expected_max_with(0.6) == pytest.approx(0.8)
        assert coin.expected_max_with(0.0) == pytest.approx(0.5)
        assert coin.expected_max_with(2.0) == pytest.approx(2.0)

    def test_draw_at_least_stays_in_tail(self, coin):
        u = np.linspace(0.0, 0.999, 50)
        assert np.all(coin.draw_at_least(u, 0.5) == 1.0)


class TestInstance:
    """Test instance construction and frequency classes."""

    def test_identical_variables_share_a_class(self, coin):
        inst = Instance((coin, Distribution.point_mass(2.0), coin))
        assert inst.frequency_classes == ((0, 2), (1,))
        assert inst.m == 1

    def test_iid_is_n_frequent(self, coin):
        inst = Instance.iid(coin, 5)
        assert inst.n == 5
        assert inst.m == 5

    def test_parametric_members_are_discretized(self):
        inst = Instance((ParametricDistribution(stats.uniform()),))
        assert isinstance(inst[0], Distribution)
        assert inst[0].mean == pytest.approx(0.5, abs=1e-6)


class TestQueries:
    """Test cdf, quantile, tail statistics and smallness."""

    def test_cdf(self, coin):
        assert dist.cdf(Distribution.point_mass(1.0), 0.5) == 0.0
        assert dist.cdf(coin, 0.0) == 0.5
        assert dist.cdf(coin, 2.0) == 1.0

    def test_quantile_generalized_inverse(self, coin):
        assert dist.quantile(coin, 0.5) == 0.0
        assert dist.quantile(coin, 0.7) == 1.0
        assert dist.quantile(coin, 0.0) == 0.0

    def test_quantile_of_parametric_uniform(self):
        assert dist.quantile(ParametricDistribution(stats.uniform()), 0.25) == pytest.approx(0.25)

    def test_quantile_rejects_levels_outside_unit_interval(self, coin):
        with pytest.raises(DomainError):
            dist.quantile(coin, 1.5)

    @pytest.mark.parametrize(
        "t, expected",
        [(0.6, (1.0, 0.5)), (0.0, (0.5, 0.0)), (2.0, (0.0, 1.0)), (1.0, (1.0, 0.5))],
    )
    def test_tail_stats(self, coin, t, expected):
        lam, p = dist.tail_stats(coin, t)
        assert lam == pytest.approx(expected[0])
        assert p == pytest.approx(expected[1])

    def test_tail_stats_rejects_negative_threshold(self, coin):
        with pytest.raises(DomainError):
            dist.tail_stats(coin, -0.1)

    def test_is_small(self):
        d = Distribution.from_atoms([0.0, 1.0], [0.95, 0.05])
        assert dist.is_small(d, 0.05, 0.0)
        assert not dist.is_small(d, 0.04, 0.0)
        assert dist.is_small(Distribution.point_mass(0.5), 0.01, 0.5)

    def test_smallness_delta(self):
        d = Distribution.from_atoms([0.0, 0.2, 1.0], [0.9, 0.07, 0.03])
        assert dist.smallness_delta(d, 0.05) == pytest.approx(0.2)
        assert dist.is_small(d, 0.05, dist.smallness_delta(d, 0.05))


class TestTransforms:
    """Test powers, shifts, truncation, thinning and splitting."""

    def test_power_cdf_square_root(self, coin):
        d = dist.power_cdf(coin, 2)
        assert d.values.tolist() == [0.0, 1.0]
        assert d.masses[0] == pytest.approx(np.sqrt(0.5), abs=1e-12)

    def test_power_cdf_identity_and_point_mass(self, coin):
        assert dist.power_cdf(coin, 1) == coin
        assert dist.power_cdf(Distribution.point_mass(3.0), 7) == Distribution.point_mass(3.0)

    def test_power_cdf_rejects_nonpositive_k(self, coin):
        with pytest.raises(DomainError):
            dist.power_cdf(coin, 0)

    def test_shift_residual(self):
        d = Distribution.from_atoms([0.0, 5.0], [0.5, 0.5])
        assert dist.shift_residual(d, 2.0).atoms() == [(0.0, 0.5), (3.0, 0.5)]
        assert dist.shift_residual(d, 0.0) == d
        assert dist.shift_residual(Distribution.point_mass(1.0), 4.0) == Distribution.point_mass(0)

    def test_truncate_below(self):
        d = Distribution.from_atoms([0.1, 2.0], [0.9, 0.1])
        assert dist.truncate_below(d, 0.5).atoms() == [(0.0, 0.9), (2.0, 0.1)]
        assert dist.truncate_below(Distribution.point_mass(0.3), 1.0) == Distribution.point_mass(0)

    def test_thin(self, coin):
        d = dist.thin(coin, 0.8)
        assert d.atoms() == [(0.0, pytest.approx(0.6)), (1.0, pytest.approx(0.4))]

    def test_split_small_preserves_the_maximum(self, coin):
        k, piece = dist.split_small(coin, 0.05)
        assert dist.is_small(piece, 0.05, 0.0)
        assert not dist.is_small(dist.power_cdf(coin, k - 1), 0.05, 0.0)
        assert float(piece.cdf(0.0)) ** k == pytest.approx(0.5, abs=1e-12)

    def test_split_small_needs_an_atom_at_zero(self):
        with pytest.raises(DomainError):
            dist.split_small(Distribution.point_mass(1.0), 0.1)

    def test_sample_matches_the_law(self, coin):
        draws = dist.sample(coin, make_rng(0, "test"), 20_000)
        assert set(np.unique(draws)) <= {0.0, 1.0}
        assert draws.mean() == pytest.approx(0.5, abs=0.02)
