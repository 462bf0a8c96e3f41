import itertools
import math

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from milpgen.generators import gen_mik, gen_mis, mis_instance
from milpgen.milp import MilpInstance, VarType
from milpgen.solver import (INFEASIBLE, LIMIT, OPTIMAL, UNBOUNDED, SolverLimits, brute_force,
                            feasible_and_bounded, is_feasible_point, solve_lp, solve_lp_arrays,
                            solve_milp)

from conftest import small_mixed_instance


def _bounds(x):
    fin = lambda v: None if not np.isfinite(v) else float(v)  # noqa: E731
    return [(fin(lo), fin(hi)) for lo, hi in zip(x.lower, x.upper)]


def highs_lp_status(x):
    """HiGHS LP status. HiGHS can report an unbounded LP as infeasible; a
    zero-objective re-solve tells the two apart."""
    ref = linprog(x.c, A_ub=x.dense(), b_ub=x.b, bounds=_bounds(x), method="highs")
    status = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}[ref.status]
    if status == INFEASIBLE:
        probe = linprog(np.zeros(x.n), A_ub=x.dense(), b_ub=x.b, bounds=_bounds(x), method="highs")
        if probe.status == 0:
            status = UNBOUNDED
    return status, ref.fun


def cont(n, lower=0.0, upper=np.inf):
    return np.full(n, lower), np.full(n, upper), np.full(n, VarType.CONTINUOUS, dtype=np.int8)


class TestLp:
    def test_single_variable(self):
        lo, hi, vt = cont(1)
        x = MilpInstance.from_triplets("a", [-1.0], [0], [0], [1.0], [3.0], lo, hi, vt)
        r = solve_lp(x)
        assert r.status == OPTIMAL and r.objective == -3.0 and r.x.tolist() == [3.0]

    def test_infeasible(self):
        lo, hi, vt = cont(1)
        x = MilpInstance.from_triplets("a", [0.0], [0], [0], [1.0], [-1.0], lo, hi, vt)
        assert solve_lp(x).status == INFEASIBLE

    def test_simplex_vertex_enumeration(self):
        # min -x - y, x + y <= 1: vertices (0,0), (1,0), (0,1)
        lo, hi, vt = cont(2)
        x = MilpInstance.from_triplets("a", [-1.0, -1.0], [0, 0], [0, 1], [1.0, 1.0], [1.0], lo, hi, vt)
        best = min(-a - b for a, b in [(0, 0), (1, 0), (0, 1)])
        assert solve_lp(x).objective == pytest.approx(best)

    def test_unbounded(self):
        lo, hi, vt = cont(2)
        x = MilpInstance.from_triplets("a", [-1.0, 0.0], [0], [1], [1.0], [1.0], lo, hi, vt)
        assert solve_lp(x).status == UNBOUNDED

    def test_free_and_upper_only_variables(self):
        # min x - y with x free, y <= 2, x >= y - 5 (i.e. -x + y <= 5)
        x = MilpInstance.from_triplets("a", [1.0, -1.0], [0, 0], [0, 1], [-1.0, 1.0], [5.0],
                                       [-np.inf, -np.inf], [np.inf, 2.0], [1, 1])
        r = solve_lp(x)
        assert r.status == OPTIMAL and r.objective == pytest.approx(-5.0)

    def test_against_highs(self, rng):
        seen = set()
        for _ in range(300):
            x = small_mixed_instance(rng)
            status, fun = highs_lp_status(x)
            r = solve_lp(x)
            assert r.status == status
            if status == OPTIMAL:
                assert r.objective == pytest.approx(fun, abs=1e-7)
                assert np.all(x.dense() @ r.x <= x.b + 1e-7)
            seen.add(status)
        assert seen == {OPTIMAL, INFEASIBLE, UNBOUNDED}

    def test_degenerate_cycling_candidate(self):
        # Beale's classic cycling example; Bland's rule must terminate
        A = np.array([[0.25, -8, -1, 9], [0.5, -12, -0.5, 3], [0, 0, 1, 0]])
        r = solve_lp_arrays(A, np.array([0, 0, 1.0]), np.array([-0.75, 20, -0.5, 6]),
                            np.zeros(4), np.full(4, np.inf))
        assert r.status == OPTIMAL and r.objective == pytest.approx(-1.25)


class TestMilp:
    def test_knapsack(self):
        # max 5a + 4b + 3c, 2a + 3b + c <= 4, binary
        x = MilpInstance.from_triplets("k", [-5.0, -4.0, -3.0], [0, 0, 0], [0, 1, 2], [2.0, 3.0, 1.0],
                                       [4.0], np.zeros(3), np.ones(3), np.zeros(3, np.int8))
        best = min(-5 * a - 4 * b - 3 * c for a, b, c in itertools.product([0, 1], repeat=3)
                   if 2 * a + 3 * b + c <= 4)
        r = solve_milp(x)
        assert r.status == OPTIMAL and r.objective == best == -8.0
        assert r.x.round().tolist() == [1.0, 0.0, 1.0]

    def test_root_integral_has_no_nodes(self):
        x = MilpInstance.from_triplets("k", [-1.0, -1.0], [0, 1], [0, 1], [1.0, 1.0], [1.0, 1.0],
                                       np.zeros(2), np.ones(2), np.zeros(2, np.int8))
        assert solve_milp(x).nodes == 0

    def test_path_graph_mis(self):
        r = solve_milp(mis_instance(3, [(0, 1), (1, 2)]))
        assert r.status == OPTIMAL and r.objective == -2.0

    def test_against_scipy_milp(self, rng):
        for k in range(60):
            x = gen_mik(3, 4, seed=k, int_vars=6, int_ub=3)
            ref = milp(x.c, constraints=LinearConstraint(x.dense(), -np.inf, x.b),
                       integrality=x.discrete_mask().astype(int), bounds=Bounds(x.lower, x.upper))
            r = solve_milp(x)
            assert r.status == OPTIMAL and r.objective == pytest.approx(ref.fun, abs=1e-6)
            assert is_feasible_point(x, r.x)

    def test_node_limit(self):
        x = gen_mis(60, 6, seed=1)
        r = solve_milp(x, SolverLimits(max_nodes=3))
        assert r.status == LIMIT
        if r.x is not None:
            assert is_feasible_point(x, r.x)

    def test_unbounded_with_integers(self):
        x = MilpInstance.from_triplets("u", [-1.0, 0.0], [0], [1], [1.0], [1.0], [0, 0],
                                       [np.inf, 1], [VarType.INTEGER, VarType.BINARY])
        assert solve_milp(x).status == UNBOUNDED
        assert brute_force(x.replace(upper=np.array([4.0, 1.0]))).objective == -4.0

    def test_limits_validated(self):
        with pytest.raises(ValueError):
            SolverLimits(max_nodes=0)


class TestBruteForce:
    def test_against_scipy_milp(self, rng):
        # the enumeration oracle agrees with HiGHS on pure-binary instances
        for _ in range(100):
            x = small_mixed_instance(rng, max_binary=8, max_cont=0)
            ref = milp(x.c, constraints=LinearConstraint(x.dense(), -np.inf, x.b),
                       integrality=np.ones(x.n), bounds=Bounds(x.lower, x.upper))
            r = brute_force(x)
            if ref.status == 2:
                assert r.status == INFEASIBLE
            else:
                assert r.status == OPTIMAL and r.objective == pytest.approx(ref.fun, abs=1e-9)

    def test_infeasible(self):
        x = MilpInstance.from_triplets("i", [1.0], [0], [0], [-1.0], [-2.0], [0], [1], [0])
        assert brute_force(x).status == INFEASIBLE
        assert solve_milp(x).status == INFEASIBLE

    def test_unbounded_continuous(self):
        x = MilpInstance.from_triplets("u", [0.0, -1.0], [0], [0], [1.0], [1.0], [0, 0],
                                       [1, np.inf], [VarType.BINARY, VarType.CONTINUOUS])
        assert brute_force(x).status == UNBOUNDED
        assert solve_milp(x).status == UNBOUNDED

    def test_refuses_large(self):
        with pytest.raises(ValueError):
            brute_force(gen_mis(30, 3, seed=0))


class TestFeasibility:
    def test_mis_feasible_bounded(self):
        assert feasible_and_bounded(gen_mis(40, 4, seed=2)) == (True, True)

    def test_infeasible(self):
        x = MilpInstance.from_triplets("i", [1.0], [0], [0], [-1.0], [-2.0], [0], [1], [0])
        assert feasible_and_bounded(x)[0] is False

    def test_lp_feasible_integer_infeasible(self):
        # 2a = 1 has the LP solution a = 0.5 but no binary one
        x = MilpInstance.from_triplets("i", [0.0], [0, 1], [0, 0], [2.0, -2.0], [1.0, -1.0],
                                       [0], [1], [0])
        assert feasible_and_bounded(x) == (False, True)

    def test_unbounded(self):
        x = MilpInstance.from_triplets("u", [0.0, -1.0], [0], [0], [1.0], [1.0], [0, 0],
                                       [1, np.inf], [VarType.BINARY, VarType.CONTINUOUS])
        assert feasible_and_bounded(x) == (True, False)

    def test_point_check(self):
        x = mis_instance(3, [(0, 1), (1, 2)])
        assert is_feasible_point(x, [1, 0, 1]) and not is_feasible_point(x, [1, 1, 0])
        assert not is_feasible_point(x, [0.5, 0, 0])
        assert math.isclose(float(x.c @ np.array([1, 0, 1])), -2.0)
