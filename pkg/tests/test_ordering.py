"""
Tests for the threshold grid, the concave relaxation and the ordering algorithms.
"""

from itertools import product

import numpy as np
import pytest

from src.analysis import ordering
from src.analysis.benchmarks import eval_policy, expected_max, opt_free_order
from src.analysis.ordering import Assignment
from src.core.config import settings
from src.core.errors import CapacityError, DomainError, PreconditionError
from src.core.utils import make_rng
from src.models.distribution import Distribution, Instance
from tests.helpers import random_instance, small_variable


@pytest.fixture
def tables_a(instance_a):
    return ordering.build_tables(instance_a, ordering.build_grid(instance_a, 0.25))


def random_stochastic(rng, shape):
    z = rng.random(shape)
    return z / z.sum(axis=-1, keepdims=True)


def best_vertex(tables):
    n, cols = tables.shape
    choices = np.array(list(product(range(cols), repeat=n)))
    return float(np.max(ordering.cp_objective(tables, np.eye(cols)[choices])))


class TestGridAndTables:
    """Test the threshold levels and the lambda/p tables."""

    def test_grid_half(self, instance_a):
        grid = ordering.build_grid(instance_a, 0.5)
        assert grid.c == 2
        assert grid.levels.tolist() == pytest.approx([0.8, 0.4, 0.0])

    def test_grid_quarter(self, instance_a):
        grid = ordering.build_grid(instance_a, 0.25)
        assert grid.size == 5
        assert grid.max_value == pytest.approx(0.8)
        assert grid.levels.tolist() == pytest.approx([0.8, 0.6, 0.4, 0.2, 0.0])

    @pytest.mark.parametrize("eps", [0.0, 0.6])
    def test_grid_eps_range(self, instance_a, eps):
        with pytest.raises(DomainError):
            ordering.build_grid(instance_a, eps)

    def test_tables(self, tables_a):
        assert tables_a.shape == (2, 5)
        assert tables_a.lam[0].tolist() == pytest.approx([1.0, 1.0, 1.0, 1.0, 0.5])
        assert tables_a.p[0].tolist() == pytest.approx([0.5, 0.5, 0.5, 0.5, 0.0])
        assert tables_a.lam[1].tolist() == pytest.approx([0.0, 0.6, 0.6, 0.6, 0.6])
        assert tables_a.p[1].tolist() == pytest.approx([1.0, 0.0, 0.0, 0.0, 0.0])

    def test_ranking(self, tables_a):
        assert tables_a.ranking.tolist() == [0, 1, 2, 3, 6, 7, 8, 9, 4, 5]
        assert tables_a.rank_of[tables_a.ranking].tolist() == list(range(10))

    def test_tables_are_read_only(self, tables_a):
        with pytest.raises(ValueError):
            tables_a.lam[0, 0] = 2.0


class TestConcaveProgram:
    """Test the relaxation objective, its gradient and the solver."""

    def test_all_zero_instance(self):
        inst = Instance.iid(Distribution.point_mass(0.0), 2)
        tables = ordering.build_tables(inst, ordering.build_grid(inst, 0.5))
        assert ordering.solve_cp(tables).objective == 0.0

    def test_objective_at_vertex_matches_integral_value(self, tables_a):
        z = np.eye(5)[[1, 4]]
        assert ordering.cp_objective(tables_a, z) == pytest.approx(0.8, abs=1e-9)
        assert ordering.integral_objective(tables_a, z) == pytest.approx(0.8)

    def test_concavity(self):
        rng = make_rng(20, "test")
        inst = random_instance(rng, 4)
        tables = ordering.build_tables(inst, ordering.build_grid(inst, 0.25))
        for _ in range(1000):
            a, b = random_stochastic(rng, (2,) + tables.shape)
            mid = ordering.cp_objective(tables, (a + b) / 2)
            avg = (ordering.cp_objective(tables, a) + ordering.cp_objective(tables, b)) / 2
            assert mid >= avg - 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = make_rng(21, "test")
        inst = random_instance(rng, 3)
        tables = ordering.build_tables(inst, ordering.build_grid(inst, 0.25))
        z = random_stochastic(rng, tables.shape)
        d = rng.normal(size=tables.shape)
        h = 1e-6
        numeric = (
            ordering.cp_objective(tables, z + h * d) - ordering.cp_objective(tables, z - h * d)
        ) / (2 * h)
        analytic = float(np.sum(ordering.cp_gradient(tables, z) * d))
        assert numeric == pytest.approx(analytic, rel=1e-5, abs=1e-8)

    def test_batched_objective(self, tables_a):
        z = np.stack([np.eye(5)[[1, 4]], np.eye(5)[[4, 1]]])
        values = ordering.cp_objective(tables_a, z)
        assert values.shape == (2,)
        assert values.tolist() == pytest.approx([0.8, 0.6], abs=1e-9)

    def test_relaxation_dominates_every_vertex(self):
        rng = make_rng(22, "test")
        for _ in range(3):
            inst = random_instance(rng, 3)
            tables = ordering.build_tables(inst, ordering.build_grid(inst, 0.25))
            frac = ordering.solve_cp(tables)
            assert frac.objective >= best_vertex(tables) * (1 - 1e-4)

    @pytest.mark.slow
    @pytest.mark.parametrize("eps", [0.5, 1 / 3, 0.25])
    def test_relaxation_dominates_every_vertex_up_to_six_rows(self, eps):
        rng = make_rng(26, "test")
        for n in range(1, 7):
            for _ in range(3):
                inst = random_instance(rng, n, support=int(rng.integers(1, 5)))
                tables = ordering.build_tables(inst, ordering.build_grid(inst, eps))
                best = best_vertex(tables)
                assert ordering.solve_cp(tables).objective >= best - 1e-6 * max(1.0, best)

    def test_single_coin_relaxation(self, coin):
        inst = Instance((coin,))
        tables = ordering.build_tables(inst, ordering.build_grid(inst, 0.5))
        assert ordering.solve_cp(tables).objective >= 0.5 - 1e-9

    def test_single_point_mass_relaxation(self):
        inst = Instance((Distribution.point_mass(2.0),))
        tables = ordering.build_tables(inst, ordering.build_grid(inst, 0.5))
        assert ordering.solve_cp(tables).objective == pytest.approx(2.0, abs=1e-9)

    def test_fixed_rows_stay_one_hot(self, tables_a):
        frac = ordering.solve_cp(tables_a, {1: 4})
        assert frac.z[1].tolist() == [0.0, 0.0, 0.0, 0.0, 1.0]
        assert frac.fixed == ((1, 4),)

    def test_fixing_outside_the_table(self, tables_a):
        with pytest.raises(DomainError):
            ordering.solve_cp(tables_a, {2: 0})

    def test_project_simplex(self):
        v = np.array([[2.0, 0.0], [0.5, 0.5], [0.2, -3.0]])
        out = ordering.project_simplex(v)
        np.testing.assert_allclose(out, [[1.0, 0.0], [0.5, 0.5], [1.0, 0.0]], atol=1e-12)

    def test_project_simplex_rows_are_distributions(self):
        out = ordering.project_simplex(make_rng(23, "test").normal(size=(10, 4, 6)))
        assert np.all(out >= 0)
        assert np.allclose(out.sum(axis=-1), 1.0)


class TestIntegralSolutions:
    """Test integral values, induced policies and rounding."""

    def test_integral_objective_of_choices(self, tables_a):
        assert ordering.integral_objective(tables_a, np.array([1, 4])) == pytest.approx(0.8)

    def test_integral_objective_rejects_fractional(self, tables_a):
        with pytest.raises(DomainError):
            ordering.integral_objective(tables_a, np.full((2, 5), 0.2))

    def test_policy_from_choices(self, instance_a, tables_a):
        pol = ordering.policy_from_choices(tables_a, [1, 4])
        assert pol.order == (0, 1)
        assert pol.thresholds == (pytest.approx(0.6), 0.0)
        assert eval_policy(instance_a, pol) == pytest.approx(0.8)

    def test_integral_objective_matches_policy_value(self):
        rng = make_rng(24, "test")
        inst = random_instance(rng, 5)
        tables = ordering.build_tables(inst, ordering.build_grid(inst, 0.25))
        for _ in range(20):
            choices = rng.integers(0, tables.grid.size, inst.n)
            pol = ordering.policy_from_choices(tables, choices)
            assert ordering.integral_objective(tables, choices) == pytest.approx(
                eval_policy(inst, pol), abs=1e-10
            )

    def test_rounding_keeps_integral_input(self, tables_a):
        integral = Assignment(z=np.eye(5)[[1, 4]], objective=0.8)
        rounded, pol = ordering.round_assignment(tables_a, integral, seed=0)
        assert rounded.choices().tolist() == [1, 4]
        assert pol.value == pytest.approx(0.8)

    def test_rounding_is_deterministic(self):
        inst = random_instance(make_rng(25, "test"), 4)
        tables = ordering.build_tables(inst, ordering.build_grid(inst, 0.25))
        frac = ordering.solve_cp(tables)
        a, _ = ordering.round_assignment(tables, frac, seed=3)
        b, _ = ordering.round_assignment(tables, frac, seed=3)
        assert np.array_equal(a.z, b.z)
        assert a.objective <= best_vertex(tables) + 1e-12

    def test_rounding_needs_repetitions(self, tables_a):
        with pytest.raises(DomainError):
            ordering.round_assignment(tables_a, ordering.solve_cp(tables_a), reps=0)

    @pytest.mark.slow
    def test_rounding_recovers_the_fractional_value_on_small_instances(self):
        eps = 0.05
        inst = Instance.iid(small_variable(eps), 6)
        tables = ordering.build_tables(inst, ordering.build_grid(inst, eps))
        frac = ordering.solve_cp(tables)
        ratios = [
            ordering.round_assignment(tables, frac, seed=seed)[0].objective / frac.objective
            for seed in range(50)
        ]
        assert np.mean(ratios) >= 0.85
        assert min(ratios) >= 1.0 - 4 * eps

    def test_assignment_validation(self):
        with pytest.raises(DomainError, match="sum to 1"):
            Assignment(z=np.full((2, 2), 0.3), objective=0.0)
        with pytest.raises(DomainError, match="one-hot"):
            Assignment(z=np.full((1, 2), 0.5), objective=0.0, fixed=((0, 1),))
        with pytest.raises(DomainError, match="fractional"):
            Assignment(z=np.full((1, 2), 0.5), objective=0.0).choices()


class TestOrders:
    """Test order_small and order_general."""

    def test_order_small_single_variable(self):
        d = small_variable(0.05)
        pol = ordering.order_small(Instance((d,)), 0.1)
        assert pol.thresholds == (0.0,)
        assert pol.value == pytest.approx(d.mean)

    def test_order_small_needs_small_variables(self, instance_a):
        with pytest.raises(PreconditionError):
            ordering.order_small(instance_a, 0.1)

    def test_order_small_against_oracle(self):
        inst = Instance(tuple(small_variable(0.05, top=1.0 + j) for j in range(6)))
        pol = ordering.order_small(inst, 0.1, seed=0)
        free, _ = opt_free_order(inst)
        assert 0.5 * free <= pol.value <= free + 1e-9

    def test_order_general_instance_a(self, instance_a):
        res = ordering.order_general(instance_a, 0.25, seed=0)
        assert res.value == pytest.approx(0.8)
        assert res.refined.value == pytest.approx(0.8)
        assert res.policy.order == (0, 1)
        assert res.big_indices == (0, 1)
        assert res.rand_indices == ()
        assert res.fixings == 4
        assert res.t_star == 0.0
        assert res.flags() == []

    def test_order_general_all_small(self):
        inst = Instance.iid(small_variable(0.05), 6)
        res = ordering.order_general(inst, 0.1, seed=0)
        assert res.big_indices == ()
        assert res.fixings == 1
        assert res.value <= opt_free_order(inst)[0] + 1e-9

    def test_capacity_without_adjustment(self, instance_a):
        with pytest.raises(CapacityError, match="exceed the cap"):
            ordering.order_general(instance_a, 0.25, allow_adjust=False, fixing_cap=1)

    def test_capacity_with_adjustment(self, instance_a):
        res = ordering.order_general(instance_a, 0.25, seed=0, fixing_cap=1)
        assert res.adjusted
        assert res.k_used == 0
        assert res.t_star == pytest.approx(1.0)
        assert "k_adjusted:2->0" in res.flags()
        assert res.value == pytest.approx(0.8)
        assert res.eps == 0.25
        assert res.eps_effective is None

    def test_effective_eps(self, monkeypatch):
        assert ordering.effective_eps(0.1, 500) == 0.1
        eff = ordering.effective_eps(0.1, 50)
        assert 0.1 < eff < np.exp(-0.5)
        assert eff**-2 * np.log(1.0 / eff) == pytest.approx(50.0, rel=1e-9)
        assert ordering.effective_eps(0.1, 1) is None
        monkeypatch.setattr(settings, "removal_multiplier", 0.5)
        eff = ordering.effective_eps(0.1, 50)
        assert 0.5 * eff**-2 * np.log(1.0 / eff) == pytest.approx(50.0, rel=1e-9)

    def test_eps_range(self, instance_a):
        with pytest.raises(DomainError):
            ordering.order_general(instance_a, 0.3)

    def test_to_dict(self, instance_a):
        out = ordering.order_general(instance_a, 0.25, seed=0).to_dict()
        assert out["policy"]["order"] == [0, 1]
        assert out["k_requested"] == 2
        assert out["eps_effective"] == 0.25
        assert out["converged"] is True

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_random_instances_against_oracle(self, seed):
        inst = random_instance(make_rng(seed, "ordering-test"), 4)
        res = ordering.order_general(inst, 0.25, seed=seed)
        free, _ = opt_free_order(inst)
        assert 0.5 * free <= res.value <= free + 1e-9
        assert res.refined.value >= res.value - 1e-9
        assert res.value <= expected_max(inst) + 1e-9

    @pytest.mark.slow
    def test_many_random_instances_against_oracle(self):
        rng = make_rng(99, "ordering-test")
        ratios = []
        for _ in range(100):
            n = int(rng.integers(7, 11))
            inst = random_instance(rng, n, support=int(rng.integers(1, 5)))
            res = ordering.order_general(inst, 0.1, seed=0)
            free, _ = opt_free_order(inst)
            assert 0.5 * free <= res.value <= free + 1e-9
            ratios.append(res.value / free)
        assert np.mean(ratios) > 0.9
