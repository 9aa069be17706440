import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from merchant_storage.lp import (BINARY, EQ, GE, LE, MAX, MIN, LinearModel, LinExpr, MilpOptions,
                                 dual_objective, relaxation_bound, resolve_engine, solve_lp,
                                 solve_milp)
from merchant_storage.lp.simplex import simplex


def tiny_lp(rhs1=4.0):
    """max 3x + 2y st x + y <= 4, x + 3y <= 6, x <= 3."""
    m = LinearModel("tiny")
    x = m.add_var("x", 0, 3)
    y = m.add_var("y")
    m.add_constraint("c1", {x: 1, y: 1}, LE, rhs1)
    m.add_constraint("c2", {x: 1, y: 3}, LE, 6)
    m.set_objective({x: 3, y: 2}, MAX)
    return m


def knapsack(values, weights, capacity):
    m = LinearModel("knap")
    idx = [m.add_var(f"z{i}", kind=BINARY) for i in range(len(values))]
    m.add_constraint("cap", dict(zip(idx, weights)), LE, capacity)
    m.set_objective(dict(zip(idx, values)), MAX)
    return m


def brute_knapsack(values, weights, capacity):
    best = 0.0
    for pick in itertools.product((0, 1), repeat=len(values)):
        if np.dot(pick, weights) <= capacity + 1e-9:
            best = max(best, float(np.dot(pick, values)))
    return best


class TestSimplex:
    def test_single_upper_row(self):
        m = LinearModel()
        x = m.add_var("x")
        m.add_constraint("cap", {x: 1}, LE, 3)
        m.set_objective({x: 1}, MAX)
        sol = solve_lp(m)
        assert sol.x[0] == pytest.approx(3.0)
        assert sol.duals[0] == pytest.approx(1.0)

    def test_covering_row(self):
        m = LinearModel()
        x, y = m.add_var("x"), m.add_var("y")
        m.add_constraint("cover", {x: 1, y: 1}, GE, 2)
        m.set_objective({x: 1, y: 1}, MIN)
        sol = solve_lp(m)
        assert sol.objective == pytest.approx(2.0)
        assert sol.duals[0] == pytest.approx(1.0)

    def test_degenerate_duplicate_rows(self):
        m = LinearModel()
        x, y = m.add_var("x"), m.add_var("y")
        m.add_constraint("a", {x: 1, y: 1}, LE, 4)
        m.add_constraint("b", {x: 1, y: 1}, LE, 4)
        m.set_objective({x: 2, y: 1}, MAX)
        sol = solve_lp(m)
        assert sol.objective == pytest.approx(8.0)
        assert sum(sol.duals) == pytest.approx(2.0)
        assert dual_objective(m, sol.duals, sol.reduced_costs) == pytest.approx(8.0)

    def test_tiny(self):
        sol = solve_lp(tiny_lp())
        assert sol.optimal
        assert sol.objective == pytest.approx(11.0)
        np.testing.assert_allclose(sol.x, [3, 1], atol=1e-9)

    def test_duals_are_sensitivities(self):
        m = tiny_lp()
        sol = solve_lp(m)
        # +1 on the rhs of c1 raises the optimum by its dual
        assert solve_lp(tiny_lp(5.0)).objective - sol.objective == pytest.approx(sol.duals[0])

    def test_strong_duality(self):
        m = tiny_lp()
        sol = solve_lp(m)
        assert dual_objective(m, sol.duals, sol.reduced_costs) == pytest.approx(sol.objective)

    def test_infeasible_lists_rows(self):
        m = LinearModel()
        x = m.add_var("x", 0, 1)
        m.add_constraint("need", {x: 1}, GE, 5)
        sol = solve_lp(m)
        assert sol.status == "infeasible"
        assert "need" in sol.infeasible_rows

    def test_unbounded(self):
        m = LinearModel()
        x = m.add_var("x")
        m.set_objective({x: 1}, MAX)
        assert solve_lp(m).status == "unbounded"

    def test_free_and_negative_bounds(self):
        m = LinearModel()
        x = m.add_var("x", -math.inf, math.inf)
        y = m.add_var("y", -5, -1)
        m.add_constraint("e", {x: 1, y: 1}, EQ, 2)
        m.set_objective({x: 1}, MIN)
        sol = solve_lp(m)
        assert sol.objective == pytest.approx(3.0)
        assert sol.x[1] == pytest.approx(-1.0)

    def test_rejects_binaries(self):
        with pytest.raises(ValueError):
            solve_lp(knapsack([1], [1], 1))

    def test_expression_constant_moves_to_rhs(self):
        m = LinearModel()
        x = m.add_var("x", 0, 10)
        m.add_constraint("c", LinExpr({x: 1.0}, 3.0), LE, 5)
        m.set_objective({x: 1}, MAX)
        assert solve_lp(m).objective == pytest.approx(2.0)

    def test_matches_highs(self):
        m = tiny_lp()
        a, b = solve_lp(m), solve_lp(m, engine="highs")
        assert a.objective == pytest.approx(b.objective)
        np.testing.assert_allclose(a.duals, b.duals, atol=1e-9)


@st.composite
def random_lp(draw):
    n = draw(st.integers(2, 6))
    k = draw(st.integers(1, 5))
    seed = draw(st.integers(0, 2**31 - 1))
    r = np.random.default_rng(seed)
    A = r.integers(-5, 6, size=(k, n)).astype(float)
    b = r.integers(0, 20, size=k).astype(float)
    c = r.integers(-5, 6, size=n).astype(float)
    ub = r.integers(1, 10, size=n).astype(float)
    senses = [draw(st.sampled_from([LE, GE, EQ])) for _ in range(k)]
    return c, A, b, ub, senses


class TestSimplexProperties:
    @given(random_lp())
    @settings(max_examples=80, deadline=None)
    def test_agrees_with_linprog(self, data):
        c, A, b, ub, senses = data
        m = LinearModel()
        idx = [m.add_var(f"x{j}", 0, ub[j]) for j in range(len(c))]
        for i, s in enumerate(senses):
            m.add_constraint(f"r{i}", dict(zip(idx, A[i])), s, b[i])
        m.set_objective(dict(zip(idx, c)), MIN)
        ours = solve_lp(m)

        ub_rows = [(A[i] if s == LE else -A[i], b[i] if s == LE else -b[i])
                   for i, s in enumerate(senses) if s != EQ]
        eq_rows = [(A[i], b[i]) for i, s in enumerate(senses) if s == EQ]
        ref = linprog(c,
                      A_ub=np.array([r for r, _ in ub_rows]) if ub_rows else None,
                      b_ub=np.array([v for _, v in ub_rows]) if ub_rows else None,
                      A_eq=np.array([r for r, _ in eq_rows]) if eq_rows else None,
                      b_eq=np.array([v for _, v in eq_rows]) if eq_rows else None,
                      bounds=list(zip([0] * len(c), ub)), method="highs")
        if ref.status == 2:
            assert ours.status == "infeasible"
            return
        assert ours.optimal
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7 * (1 + abs(ref.fun)))
        assert m.max_violation(ours.x) <= 1e-7
        # strong duality and complementary slackness on the returned duals
        gap = abs(dual_objective(m, ours.duals, ours.reduced_costs) - ours.objective)
        assert gap <= 1e-6 * (1 + abs(ours.objective))
        slack = b - A @ ours.x
        assert np.all(np.abs(ours.duals * slack) <= 1e-6)


class TestMilp:
    def test_two_item_knapsack(self):
        m = knapsack([3, 2], [1, 1], 1)
        sol = solve_milp(m)
        assert sol.objective == pytest.approx(3.0)
        assert list(sol.x) == [1.0, 0.0]

    def test_all_fixed_equals_lp(self):
        m = LinearModel()
        z = m.add_var("z", 1, 1, kind=BINARY)
        x = m.add_var("x", 0, 5)
        m.add_constraint("r", {x: 1, z: 2}, LE, 4)
        m.set_objective({x: 1, z: 1}, MAX)
        assert solve_milp(m).objective == pytest.approx(solve_lp(m.relaxed()).objective)

    def test_knapsack(self):
        v, w = [10, 13, 7, 8, 9], [4, 6, 3, 4, 5]
        sol = solve_milp(knapsack(v, w, 12))
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(brute_knapsack(v, w, 12))
        assert set(np.unique(sol.x)) <= {0.0, 1.0}

    def test_fixed_binaries(self):
        m = knapsack([5, 4], [1, 1], 2).with_bounds({0: (0.0, 0.0)})
        assert solve_milp(m).objective == pytest.approx(4.0)

    def test_infeasible(self):
        m = knapsack([1, 1], [1, 1], 1)
        m.add_constraint("both", {0: 1, 1: 1}, GE, 2)
        assert solve_milp(m).status == "infeasible"

    @pytest.mark.parametrize("engine", ["bnb", "highs"])
    def test_mixed(self, engine):
        # facility-location flavour: open z to allow x, fixed cost 3
        m = LinearModel()
        z = m.add_var("z", kind=BINARY)
        x = m.add_var("x", 0, 10)
        m.add_constraint("link", {x: 1, z: -10}, LE, 0)
        m.add_constraint("cap", {x: 1}, LE, 2.5)
        m.set_objective({x: 2, z: -3}, MAX)
        sol = solve_milp(m, MilpOptions(engine=engine))
        assert sol.objective == pytest.approx(2.0)
        assert sol.x[0] == 1.0

    def test_auto_engine(self):
        assert resolve_engine(knapsack([1] * 3, [1] * 3, 1), "auto") == "bnb"
        assert resolve_engine(knapsack([1] * 30, [1] * 30, 1), "auto") == "highs"
        assert resolve_engine(knapsack([1] * 30, [1] * 30, 1), "bnb") == "bnb"

    def test_deterministic(self):
        v, w = [3, 3, 3, 3, 3, 3], [2, 2, 2, 2, 2, 2]
        a = solve_milp(knapsack(v, w, 7))
        b = solve_milp(knapsack(v, w, 7))
        np.testing.assert_array_equal(a.x, b.x)
        assert a.nodes == b.nodes


class TestMilpProperties:
    @given(st.lists(st.integers(1, 20), min_size=8, max_size=8),
           st.lists(st.integers(1, 10), min_size=8, max_size=8), st.integers(5, 40))
    @settings(max_examples=30, deadline=None)
    def test_matches_enumeration(self, values, weights, cap):
        m = knapsack(values, weights, cap)
        sol = solve_milp(m)
        assert sol.objective == pytest.approx(brute_knapsack(values, weights, cap))
        assert sol.objective <= relaxation_bound(m) + 1e-6 * max(1.0, abs(sol.objective))

    @given(st.lists(st.integers(1, 20), min_size=4, max_size=8), st.integers(3, 30))
    @settings(max_examples=20, deadline=None)
    def test_engines_agree(self, values, cap):
        weights = [1 + (v * 7) % 9 for v in values]
        m = knapsack(values, weights, cap)
        a = solve_milp(m, MilpOptions(engine="bnb"))
        b = solve_milp(m, MilpOptions(engine="highs"))
        assert a.objective == pytest.approx(b.objective)


class TestDenseKernel:
    def test_direct_call(self):
        c = np.array([-1.0, -1.0])
        A = np.array([[1.0, 2.0], [3.0, 1.0]])
        sol = simplex(c, A, [LE, LE], np.array([4.0, 6.0]), np.zeros(2),
                      np.full(2, np.inf))
        assert sol.objective == pytest.approx(-2.8)
