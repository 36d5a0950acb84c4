import math

import numpy as np
import pytest
import scipy.optimize

from heatpinn.milp import (FEASIBLE_BUDGET_EXHAUSTED, INFEASIBLE, OPTIMAL,
                           LinExpr, MilpModel, SolveBudget, lin_sum, solve_lp,
                           solve_milp)
from oracles import binary_enumeration_optimum


def test_linexpr_arithmetic():
    a = LinExpr.term("x", 2.0)
    b = LinExpr.term("y")
    e = 3.0 * a - b + 1.5
    assert e.terms == {"x": 6.0, "y": -1.0}
    assert e.const == 1.5
    assert (-e).terms["x"] == -6.0
    assert (e / 2).const == 0.75
    assert e.value({"x": 1.0, "y": 2.0}) == pytest.approx(6.0 - 2.0 + 1.5)


def test_model_validation():
    m = MilpModel()
    m.add_var("x", 0, 1)
    with pytest.raises(ValueError):
        m.add_var("x", 0, 1)  # duplicate
    with pytest.raises(ValueError):
        m.add_var("y", 0, math.inf)  # infinite bound
    with pytest.raises(ValueError):
        m.add_var("b", -0.5, 1, binary=True)  # binary outside [0,1]
    with pytest.raises(KeyError):
        m.add_constraint(LinExpr.term("ghost"), "<=", 1)


class TestLp:
    def test_triangle(self):
        m = MilpModel()
        x = m.add_var("x", 0, 1)
        y = m.add_var("y", 0, 1)
        m.add_constraint(x + y, "<=", 1)
        m.set_objective(-x - y)
        status, values, obj = solve_lp(m)
        assert status == OPTIMAL
        assert obj == pytest.approx(-1.0, abs=1e-9)
        assert values["x"] + values["y"] == pytest.approx(1.0, abs=1e-9)

    def test_lower_bounded(self):
        m = MilpModel()
        x = m.add_var("x", 0, 1)
        m.add_constraint(x, ">=", 0.4)
        m.set_objective(x)
        status, values, obj = solve_lp(m)
        assert status == OPTIMAL and obj == pytest.approx(0.4)

    def test_infeasible(self):
        m = MilpModel()
        x = m.add_var("x", 0, 5)
        m.add_constraint(x, ">=", 2)
        m.add_constraint(x, "<=", 1)
        m.set_objective(x)
        assert solve_lp(m)[0] == INFEASIBLE

    def test_no_constraints(self):
        m = MilpModel()
        x = m.add_var("x", 0, 1)
        m.set_objective(x)
        status, values, obj = solve_lp(m)
        assert status == OPTIMAL and obj == 0.0

    def test_equality_and_overrides(self):
        m = MilpModel()
        x = m.add_var("x", -2, 2)
        y = m.add_var("y", -2, 2)
        m.add_constraint(x + y, "=", 1)
        m.set_objective(x - y)
        status, values, obj = solve_lp(m)
        assert obj == pytest.approx(-3.0)  # x=-2, y=3? no: y<=2 -> x=-1,y=2
        status, values, obj = solve_lp(m, bound_overrides={"y": (0.0, 0.5)})
        assert obj == pytest.approx(0.0)  # y=0.5, x=0.5


def random_lp(rng, n=6, m=5):
    """Feasible bounded LP with mixed relations."""
    model = MilpModel()
    lb = rng.uniform(-2.0, 0.0, n)
    ub = lb + rng.uniform(0.5, 3.0, n)
    xs = [model.add_var(f"x{i}", lb[i], ub[i]) for i in range(n)]
    x0 = rng.uniform(lb, ub)
    A = rng.normal(0.0, 1.0, (m, n))
    for i in range(m):
        expr = lin_sum(A[i, j] * xs[j] for j in range(n))
        lhs = float(A[i] @ x0)
        kind = rng.integers(0, 3)
        if kind == 0:
            model.add_constraint(expr, "<=", lhs + rng.uniform(0.0, 1.0))
        elif kind == 1:
            model.add_constraint(expr, ">=", lhs - rng.uniform(0.0, 1.0))
        else:
            model.add_constraint(expr, "=", lhs)
    model.set_objective(lin_sum(rng.normal(0.0, 1.0) * x for x in xs))
    return model


def scipy_reference(model):
    comp = model.compile()
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for i in range(comp.A.shape[0]):
        if comp.rel[i] < 0:
            A_ub.append(comp.A[i]); b_ub.append(comp.rhs[i])
        elif comp.rel[i] > 0:
            A_ub.append(-comp.A[i]); b_ub.append(-comp.rhs[i])
        else:
            A_eq.append(comp.A[i]); b_eq.append(comp.rhs[i])
    res = scipy.optimize.linprog(
        comp.c,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=list(zip(comp.lb, comp.ub)),
        method="highs",
    )
    return res


def test_lp_matches_scipy_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(40):
        model = random_lp(rng)
        status, values, obj = solve_lp(model)
        ref = scipy_reference(model)
        assert status == OPTIMAL and ref.status == 0
        assert obj == pytest.approx(ref.fun, abs=1e-7)


def test_lp_solution_satisfies_constraints():
    rng = np.random.default_rng(1)
    for _ in range(20):
        model = random_lp(rng)
        status, values, obj = solve_lp(model)
        assert status == OPTIMAL
        for con in model.constraints:
            lhs = sum(c * values[n] for n, c in con.terms.items())
            if con.relation == "<=":
                assert lhs <= con.rhs + 1e-7
            elif con.relation == ">=":
                assert lhs >= con.rhs - 1e-7
            else:
                assert lhs == pytest.approx(con.rhs, abs=1e-7)


class TestMilp:
    def test_binary_round_up(self):
        m = MilpModel()
        x = m.add_var("x", 0, 1, binary=True)
        m.add_constraint(x, ">=", 0.4)
        m.set_objective(x)
        sol = solve_milp(m)
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(1.0)
        assert sol.values["x"] == pytest.approx(1.0, abs=1e-7)

    def test_binary_triangle(self):
        m = MilpModel()
        x = m.add_var("x", 0, 1, binary=True)
        y = m.add_var("y", 0, 1, binary=True)
        m.add_constraint(x + y, "<=", 1)
        m.set_objective(-x - y)
        sol = solve_milp(m)
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(-1.0)
        pair = (round(sol.values["x"]), round(sol.values["y"]))
        assert pair in ((1, 0), (0, 1))

    def test_infeasible_milp(self):
        m = MilpModel()
        x = m.add_var("x", 0, 1, binary=True)
        m.add_constraint(x, ">=", 0.3)
        m.add_constraint(x, "<=", 0.7)
        m.set_objective(x)
        assert solve_milp(m).status == INFEASIBLE

    def test_budget_exhaustion_returns_incumbent(self):
        rng = np.random.default_rng(5)
        model = random_milp(rng, n_bin=10, n_cont=4, m=8)
        sol = solve_milp(model, SolveBudget(max_nodes=2, max_seconds=60.0))
        assert sol.status in (OPTIMAL, FEASIBLE_BUDGET_EXHAUSTED)
        assert math.isfinite(sol.objective)
        _assert_feasible(model, sol)


def random_milp(rng, n_bin=6, n_cont=3, m=6):
    """Feasible bounded MILP: constraints built around a 0/1 point."""
    model = MilpModel()
    xs = []
    for i in range(n_bin):
        xs.append(model.add_var(f"b{i}", 0, 1, binary=True))
    for i in range(n_cont):
        xs.append(model.add_var(f"x{i}", -1.0, 2.0))
    n = n_bin + n_cont
    x0 = np.concatenate([
        rng.integers(0, 2, n_bin).astype(float),
        rng.uniform(-1.0, 2.0, n_cont),
    ])
    A = rng.normal(0.0, 1.0, (m, n))
    for i in range(m):
        expr = lin_sum(A[i, j] * xs[j] for j in range(n))
        lhs = float(A[i] @ x0)
        if rng.integers(0, 2):
            model.add_constraint(expr, "<=", lhs + rng.uniform(0.1, 1.0))
        else:
            model.add_constraint(expr, ">=", lhs - rng.uniform(0.1, 1.0))
    model.set_objective(lin_sum(rng.normal(0.0, 1.0) * x for x in xs))
    return model


def _assert_feasible(model, sol):
    for con in model.constraints:
        lhs = sum(c * sol.values[n] for n, c in con.terms.items())
        if con.relation == "<=":
            assert lhs <= con.rhs + 1e-7
        elif con.relation == ">=":
            assert lhs >= con.rhs - 1e-7
        else:
            assert lhs == pytest.approx(con.rhs, abs=1e-7)
    for v in model.variables:
        if v.is_binary:
            val = sol.values[v.name]
            assert min(abs(val), abs(1 - val)) <= 1e-7


def test_milp_matches_binary_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(15):
        model = random_milp(rng, n_bin=int(rng.integers(2, 7)))
        sol = solve_milp(model)
        ref, _ = binary_enumeration_optimum(model)
        if sol.status == INFEASIBLE:
            assert ref == math.inf
            continue
        assert sol.status == OPTIMAL
        assert sol.objective == pytest.approx(ref, abs=1e-6)
        _assert_feasible(model, sol)


def test_lp_relaxation_bounds_milp():
    rng = np.random.default_rng(3)
    for _ in range(10):
        model = random_milp(rng)
        status, _, lp_obj = solve_lp(model)
        sol = solve_milp(model)
        if sol.status == OPTIMAL:
            assert lp_obj <= sol.objective + 1e-7
            assert sol.best_bound <= sol.objective + 1e-9
