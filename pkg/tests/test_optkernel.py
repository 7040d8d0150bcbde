import math

import numpy as np
import pytest

from instances import random_binary_model, random_lp
from oracles import enumerate_binary_mip, lp_certificate_errors
from vrtpp.optkernel import (FEASIBLE_TIME_LIMIT, INFEASIBLE, NO_SOLUTION_TIME_LIMIT, OPTIMAL, UNBOUNDED, LinearModel,
                             get_solver, solve_lp, solve_mip)


def check_lp_duality(model, A, b, rels, c, out, tol=1e-6):
    assert model.max_violation(out.x) < tol
    assert out.objective == pytest.approx(float(np.dot(c, out.x)), abs=1e-9)
    errs = lp_certificate_errors(A, b, rels, c, model.sense, out.x, out.duals)
    assert max(errs.values()) < tol, errs


@pytest.mark.parametrize("backend", ["embedded", "highs"])
@pytest.mark.parametrize("sense", ["max", "min"])
def test_lp_duality_random(backend, sense):
    rng = np.random.default_rng(11 if sense == "max" else 12)
    for _ in range(25):
        n, m = int(rng.integers(2, 9)), int(rng.integers(1, 7))
        model, A, b, rels, c = random_lp(rng, n, m, sense)
        out = solve_lp(model, backend)
        assert out.status == OPTIMAL
        check_lp_duality(model, A, b, rels, c, out)


def test_backends_agree_on_lp():
    rng = np.random.default_rng(13)
    for _ in range(30):
        model, *_ = random_lp(rng, 6, 5, "max")
        assert solve_lp(model, "embedded").objective == pytest.approx(solve_lp(model, "highs").objective, abs=1e-7)


def test_lp_small_known():
    # max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3.5  ->  x=3.5, y=0.5, obj 11.5, duals (2, 0, 1)
    m = LinearModel(sense="max")
    x = m.add_var("x", obj=3.0)
    y = m.add_var("y", obj=2.0)
    m.add_constr({x: 1, y: 1}, "<=", 4)
    m.add_constr({x: 1, y: 3}, "<=", 6)
    m.add_constr({x: 1}, "<=", 3.5)
    for backend in ("embedded", "highs"):
        out = solve_lp(m, backend)
        np.testing.assert_allclose(out.x, [3.5, 0.5], atol=1e-9)
        assert out.objective == pytest.approx(11.5)
        np.testing.assert_allclose(out.duals, [2, 0, 1], atol=1e-9)


def test_lp_infeasible_and_unbounded():
    m = LinearModel(sense="max")
    x = m.add_var("x")
    m.add_constr({x: 1}, "<=", 1)
    m.add_constr({x: 1}, ">=", 2)
    assert solve_lp(m).status == INFEASIBLE
    assert solve_lp(m, "highs").status == INFEASIBLE
    u = LinearModel(sense="max")
    x = u.add_var("x", obj=1.0)
    y = u.add_var("y")
    u.add_constr({x: 1, y: -1}, "<=", 1)
    assert solve_lp(u).status == UNBOUNDED
    assert solve_lp(u, "highs").status == UNBOUNDED


def test_lp_free_and_upper_bounded_variables():
    # min x subject to x >= -5 written as a row with x free; y only upper-bounded
    m = LinearModel(sense="min")
    x = m.add_var("x", lb=-math.inf, obj=1.0)
    y = m.add_var("y", lb=-math.inf, ub=2.0, obj=-1.0)
    m.add_constr({x: 1}, ">=", -5)
    out = solve_lp(m)
    assert out.objective == pytest.approx(-7.0)
    np.testing.assert_allclose(out.x, [-5, 2], atol=1e-9)


def test_knapsack():
    # capacity 7: {0, 1} weighs 7 and is worth 23; no other feasible subset beats it
    c = [10, 13, 7, 8]
    w = [3, 4, 2, 3]
    m = LinearModel(sense="max")
    for k in range(4):
        m.add_var(f"y{k}", binary=True, obj=c[k])
    m.add_constr({k: w[k] for k in range(4)}, "<=", 7)
    assert enumerate_binary_mip(c, [w], [7]) == 23.0
    for backend in ("embedded", "highs"):
        out = solve_mip(m, backend=backend)
        assert out.status == OPTIMAL
        assert out.objective == pytest.approx(23.0)
        np.testing.assert_array_equal(out.x, [1, 1, 0, 0])


@pytest.mark.parametrize("backend", ["embedded", "highs"])
def test_mip_matches_enumeration(backend):
    rng = np.random.default_rng(21)
    for _ in range(40):
        n, m = int(rng.integers(2, 13)), int(rng.integers(1, 5))
        model, c, A, b = random_binary_model(rng, n, m)
        expect = enumerate_binary_mip(c, A, b)
        out = solve_mip(model, backend=backend)
        if expect is None:
            assert out.status == INFEASIBLE
        else:
            assert out.status == OPTIMAL
            assert out.objective == pytest.approx(expect, abs=1e-6)
            assert model.max_violation(out.x) < 1e-6


def test_mixed_binary_continuous():
    # max x + 2y, x <= 1.5 y, x continuous in [0, 4], y binary, x + 3y <= 4
    m = LinearModel(sense="max")
    x = m.add_var("x", ub=4.0, obj=1.0)
    y = m.add_var("y", binary=True, obj=2.0)
    m.add_constr({x: 1, y: -1.5}, "<=", 0)
    m.add_constr({x: 1, y: 3}, "<=", 4)
    out = solve_mip(m, backend="embedded")
    assert out.objective == pytest.approx(3.0)
    np.testing.assert_allclose(out.x, [1.0, 1.0], atol=1e-9)


def test_mip_min_sense_and_infeasible():
    m = LinearModel(sense="min")
    ys = [m.add_var(f"y{k}", binary=True, obj=float(k + 1)) for k in range(4)]
    m.add_constr({k: 1.0 for k in ys}, ">=", 2)
    assert solve_mip(m, backend="embedded").objective == pytest.approx(3.0)
    m.add_constr({k: 1.0 for k in ys}, "<=", 1)
    assert solve_mip(m, backend="embedded").status == INFEASIBLE


def test_time_limit_reports_incumbent_or_none():
    rng = np.random.default_rng(5)
    model, *_ = random_binary_model(rng, 30, 6)
    out = solve_mip(model, time_limit=0.0, backend="embedded")
    assert out.status in (FEASIBLE_TIME_LIMIT, NO_SOLUTION_TIME_LIMIT, OPTIMAL)
    if out.status == FEASIBLE_TIME_LIMIT:
        assert out.bound >= out.objective - 1e-9
    full = solve_mip(model, backend="highs")
    if out.has_solution:
        assert out.objective <= full.objective + 1e-6


def test_model_validation():
    m = LinearModel()
    m.add_var("x")
    with pytest.raises(ValueError):
        m.add_var("x")
    with pytest.raises(IndexError):
        m.add_constr({3: 1.0}, "<=", 1)
    with pytest.raises(ValueError):
        m.add_constr({0: 1.0}, "<", 1)
    with pytest.raises(ValueError):
        LinearModel(sense="maximize")
    with pytest.raises(ValueError):
        get_solver("gurobi")
    b = LinearModel()
    b.add_var("y", binary=True)
    with pytest.raises(ValueError):
        solve_lp(b)


def test_lp_export(tmp_path):
    m = LinearModel("demo", sense="max")
    x = m.add_var("x[1]", ub=3.0, obj=3.0)
    y = m.add_var("y", binary=True, obj=-2.0)
    m.add_constr({x: 1.0, y: -4.0}, "<=", 0.0, name="link")
    path = tmp_path / "demo.lp"
    m.write_lp(path)
    text = path.read_text()
    assert text.splitlines()[1] == "Maximize"
    assert " obj: 3 x_1_ - 2 y" in text
    assert " link: 1 x_1_ - 4 y <= 0" in text
    assert " 0 <= x_1_ <= 3" in text
    assert "Binaries\n y\n" in text
    assert text.endswith("End\n")
