import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bilayer_epi.gp import (
    INFEASIBLE,
    ITERATION_LIMIT,
    GeometricProgram,
    GPError,
    Monomial,
    Posynomial,
    SolverOptions,
    Variable,
    check_solution,
    evaluate,
    log_transform,
    parse_program,
    posynomial_transform,
    solve,
)

from gp_cases import corpus, infeasible

NAMES = ["x", "y", "z", "w"]


def naive_value(terms, point):
    total = 0.0
    for c, exps in terms:
        v = c
        for k, r in exps.items():
            v *= math.exp(r * math.log(point[k]))
        total += v
    return total


term_st = st.tuples(
    st.floats(0.01, 100),
    st.dictionaries(st.sampled_from(NAMES), st.floats(-3, 3), max_size=4),
)


def random_posynomial(rng, n_terms, names=NAMES):
    terms = []
    for _ in range(n_terms):
        exps = {k: rng.uniform(-2, 2) for k in names if rng.random() < 0.7}
        terms.append(Monomial(rng.uniform(0.1, 3), exps))
    return Posynomial(terms)


def random_program(rng):
    k = rng.integers(1, 4)
    return GeometricProgram(random_posynomial(rng, 3), [random_posynomial(rng, int(rng.integers(1, 4))) for _ in range(k)],
                            variables=NAMES)


def test_eval_examples():
    x = Variable("x")
    assert evaluate(3 * x ** 2, {"x": 2.0}) == 12.0
    assert evaluate(x + 1 / x, {"x": 1.0}) == 2.0


@settings(max_examples=200, deadline=None)
@given(st.lists(term_st, min_size=1, max_size=6), st.lists(st.floats(0.05, 20), min_size=4, max_size=4))
def test_eval_matches_naive(terms, values):
    point = dict(zip(NAMES, values))
    p = Posynomial([Monomial(c, e) for c, e in terms])
    expected = naive_value(terms, point)
    assert evaluate(p, point) == pytest.approx(expected, rel=1e-12)


def test_eval_errors():
    x = Variable("x")
    with pytest.raises(GPError, match="not assigned"):
        evaluate(x + Variable("y"), {"x": 1.0})
    with pytest.raises(GPError, match="positive"):
        evaluate(x, {"x": 0.0})


def test_nonpositive_coefficients_rejected():
    with pytest.raises(GPError):
        Monomial(0.0, {"x": 1})
    with pytest.raises(GPError):
        Monomial(-2.0)
    with pytest.raises(GPError):
        Posynomial([])


def test_undeclared_variable():
    with pytest.raises(GPError, match="undeclared"):
        GeometricProgram(Variable("x") + Variable("y"), variables=["x"])


def test_transform_quadratic_cost():
    g = posynomial_transform([(1.0, 2.0), (1.0, 1.0)], 0.8, var="t")
    assert g == Variable("t") ** 2 + Variable("t")


def test_transform_linear():
    assert posynomial_transform([(1.0, 1.0)], 1.0, var="t") == Posynomial([Variable("t")])


def test_transform_pointwise():
    rng = np.random.default_rng(1)
    coef = rng.uniform(0.1, 2, 4)
    powers = rng.uniform(0.5, 3, 4)
    x_hat = 1.0
    g_hat = posynomial_transform(zip(coef, powers), x_hat)
    for x in rng.uniform(0, x_hat, 100):
        direct = float(np.sum(coef * (x_hat - x) ** powers))
        assert evaluate(g_hat, {"z": x_hat - x}) == pytest.approx(direct, rel=1e-12)


def test_transform_errors():
    with pytest.raises(GPError):
        posynomial_transform([(0.0, 1.0)], 1.0)
    with pytest.raises(GPError):
        posynomial_transform([(1.0, 1.0)], 0.0)


def test_single_monomial_is_affine():
    cp = log_transform(GeometricProgram(Monomial(3.0, {"x": 2.5})))
    for y in (-1.0, 0.0, 2.0):
        assert cp.objective_value(np.array([y])) == pytest.approx(math.log(3.0) + 2.5 * y)


def test_symmetric_lse():
    cp = log_transform(GeometricProgram(Variable("x") + 1 / Variable("x")))
    assert cp.objective_grad(np.array([0.0]))[0] == pytest.approx(0.0)
    assert solve(GeometricProgram(Variable("x") + 1 / Variable("x"))).values["x"] == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(10))
def test_gradients_and_hessians_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    cp = log_transform(random_program(rng))
    y = rng.normal(size=len(NAMES))
    n = len(y)
    G = cp.constraint_grads(y)
    for i in range(cp.constraints.m):
        H = cp.constraint_hess(y, i)
        for k in range(n):
            e = np.zeros(n)
            h = 1e-7
            e[k] = h
            fd = (cp.constraint_values(y + e)[i] - cp.constraint_values(y - e)[i]) / (2 * h)
            assert abs(fd - G[i, k]) < 1e-6
            e[k] = 1e-5
            fd_h = (cp.constraint_grads(y + e)[i] - cp.constraint_grads(y - e)[i]) / 2e-5
            assert np.abs(fd_h - H[:, k]).max() < 1e-4


def test_transform_preserves_feasibility():
    rng = np.random.default_rng(3)
    for _ in range(50):
        gp = random_program(rng)
        cp = log_transform(gp)
        point = dict(zip(NAMES, rng.uniform(0.05, 5, 4)))
        F = cp.constraint_values(cp.to_log(point))
        direct = np.array([evaluate(c, point) for c in gp.constraints])
        assert np.allclose(np.exp(F), direct, rtol=1e-12)
        assert np.array_equal(F <= 0, direct <= 1) or np.abs(direct - 1).min() < 1e-12


def test_midpoint_convexity():
    rng = np.random.default_rng(4)
    for _ in range(1000 // 25):
        cp = log_transform(random_program(rng))
        for _ in range(25):
            a, b = rng.normal(scale=3, size=(2, 4))
            fa, fb, fm = cp.constraint_values(a), cp.constraint_values(b), cp.constraint_values((a + b) / 2)
            assert np.all(fm <= (fa + fb) / 2 + 1e-12)


def test_overflow_safety():
    cp = log_transform(GeometricProgram(Variable("x") ** 50 + 1 / Variable("x")))
    assert np.isfinite(cp.objective_value(np.array([30.0])))


@pytest.mark.parametrize("label,gp,optimum", corpus(), ids=[c[0] for c in corpus()])
def test_corpus(label, gp, optimum):
    sol = solve(gp)
    assert sol.optimal
    assert abs(sol.objective_value - optimum) / optimum <= 1e-6
    assert check_solution(gp, sol) <= 1e-8
    assert sol.kkt_residual <= 1e-7


def test_grid_search_oracle():
    # minimize x + y with 8/(xy) <= 1: on the active curve y = 8/x
    xs = np.arange(0.5, 10, 1e-3)
    best = np.min(xs + 8 / xs)
    sol = solve(GeometricProgram(Variable("x") + Variable("y"), [8 / (Variable("x") * Variable("y"))]))
    assert round(sol.objective_value, 3) == round(best, 3)
    assert sol.values["x"] == pytest.approx(2 * math.sqrt(2), rel=1e-5)


def test_infeasible():
    sol = solve(infeasible())
    assert sol.status == INFEASIBLE
    assert sol.phase1_value > 0


def test_iteration_limit():
    sol = solve(corpus()[6][1], SolverOptions(max_newton=3))
    assert sol.status == ITERATION_LIMIT


def test_feasible_start_is_used():
    gp = corpus()[2][1]
    sol = solve(gp, x0={"x": 5.0, "y": 5.0})
    assert sol.objective_value == pytest.approx(4 * math.sqrt(2), rel=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_programs_are_feasible_or_flagged(seed):
    rng = np.random.default_rng(seed)
    gp = random_program(rng)
    # box both sides so an optimum exists
    gp.upper_bounds = {k: 100.0 for k in NAMES}
    gp.constraints += [0.01 / Variable(k) for k in NAMES]
    gp.constraints = [c if isinstance(c, Posynomial) else Posynomial([c]) for c in gp.constraints]
    sol = solve(gp)
    if sol.optimal:
        assert check_solution(gp, sol) <= 1e-8


def test_dump_parse_round_trip():
    for _, gp, _ in corpus():
        text = gp.dumps()
        back = parse_program(text)
        assert back.dumps() == text
        assert solve(back).objective_value == pytest.approx(solve(gp).objective_value, rel=1e-12)


def test_dump_with_names_and_bounds():
    x = Variable("x")
    gp = GeometricProgram(1 / x, [2e-3 * x ** 1.5], names=["cap"], upper_bounds={"x": 7.0})
    text = gp.dumps()
    assert "[cap] " in text and "bound: x <= 7.0" in text
    back = parse_program(text)
    assert back.names == ["cap"] and back.upper_bounds == {"x": 7.0}


def test_parse_error_reports_line():
    with pytest.raises(GPError, match="line 2"):
        parse_program("minimize: 1.0 * x^1.0\nnonsense\n")
