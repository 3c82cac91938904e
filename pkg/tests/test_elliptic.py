import math

import numpy as np
import pytest

from stencil_lab.elliptic import (ConvergenceError, PreconditionError, residual, series_oracle_1d, solve_elliptic,
                                  solve_via_resolvent, tridiagonal_oracle_1d)
from stencil_lab.lattice import Domain, Stencil, sample
from stencil_lab.operator import CoefficientSet, Problem, apply_L
from stencil_lab.presets import get_preset

PM1 = [(1,), (-1,)]
MODEL_F = "1/(1+x1^2)"


def problem_1d(q=None, p=None, c=1, f=0, g=0, kind="box", h=0.1, lower=-1.0, upper=1.0, **kw):
    return Problem(Domain(kind, (lower,), (upper,), h), Stencil(PM1),
                   CoefficientSet(q=q or {}, p=p or {}, c=c, f=f, g=g), **kw)


def test_constant_solution():
    prob = problem_1d(q={(1,): "1+x1^2", (-1,): 1}, p={(1,): "pos(x1)"}, c="2+cos(x1)", f="3*(2+cos(x1))", g=3)
    u = solve_elliptic(prob)
    np.testing.assert_allclose(u.values, 3.0, atol=1e-10)


def test_zero_data_gives_zero():
    u = solve_elliptic(problem_1d(q={(1,): 1, (-1,): 1}))
    assert np.all(u.values == 0)


def test_residual_meets_tolerance():
    prob = get_preset("degenerate-q-x2")
    u, info = solve_elliptic(prob, tol=1e-9, return_info=True)
    assert info.residual <= 1e-9
    assert residual(prob, u) <= 1e-9
    lu = apply_L(prob, u)
    f = sample(prob.coeffs.f, prob.domain).values
    assert np.max(np.abs((lu.values + f)[lu.defined])) <= 1e-9


def test_jacobi_agrees_with_gauss_seidel():
    prob = get_preset("transport-decreasing-b", h=0.1)
    a = solve_elliptic(prob, tol=1e-11)
    b = solve_elliptic(prob, tol=1e-11, method="jacobi")
    assert np.max(np.abs(a.values - b.values)) <= 2e-11 / prob.c0


def test_precondition_errors():
    with pytest.raises(PreconditionError):
        solve_elliptic(problem_1d(p={(1,): -1}))
    with pytest.raises(PreconditionError):
        solve_elliptic(problem_1d(c=0.5, c0=1.0))
    with pytest.raises(PreconditionError):
        solve_elliptic(problem_1d(c="1+t"))
    with pytest.raises(ValueError):
        solve_elliptic(problem_1d(), method="sor")


def test_convergence_error_carries_best_iterate():
    prob = get_preset("model-1d")
    with pytest.raises(ConvergenceError) as info:
        solve_elliptic(prob, tol=1e-14, max_iter=3)
    err = info.value
    assert err.iterations == 3
    assert err.residual > 1e-14
    assert err.best.values.shape == prob.domain.shape


def test_elliptic_comparison():
    base = get_preset("degenerate-q-x2")
    u1 = solve_elliptic(base.with_coeffs(f="cos(x1) - 1"))
    u2 = solve_elliptic(base.with_coeffs(f="cos(x1) + x1^2"))
    assert np.all(u1.values <= u2.values + 1e-12)


@pytest.mark.parametrize("name", ["degenerate-q-x2", "transport-decreasing-b", "corollary", "model-1d"])
def test_sup_bound(name):
    prob = get_preset(name)
    u = solve_elliptic(prob)
    dom = prob.domain
    f = np.broadcast_to(sample(prob.coeffs.f, dom).values, dom.shape)
    g = np.broadcast_to(sample(prob.coeffs.g, dom).values, dom.shape)
    interior = np.zeros(dom.shape, dtype=bool)
    interior[1:-1] = True
    bound = np.max(np.abs(f[interior])) / prob.c0 + np.max(np.abs(g[~interior]))
    assert np.max(np.abs(u.values)) <= bound + 1e-9


def test_resolvent_scalar_case():
    prob = problem_1d(c=1, f="sin(x1)", kind="periodic", lower=0.0, upper=2 * math.pi, h=2 * math.pi / 16)
    u = solve_via_resolvent(prob, tol=1e-10)
    np.testing.assert_allclose(u.values, sample("sin(x1)", prob.domain).values, atol=1e-10)


def test_resolvent_zero_forcing():
    u = solve_via_resolvent(problem_1d(q={(1,): 1, (-1,): 1}))
    assert np.all(u.values == 0)


@pytest.mark.parametrize("name", ["model-1d", "degenerate-q-x2", "transport-decreasing-b", "manufactured-cos"])
def test_resolvent_agrees_with_gauss_seidel(name):
    prob = get_preset(name)
    if name == "model-1d":
        prob = prob.replace(domain=Domain("box", (-10.0,), (10.0,), 0.5))
    tol = 1e-10
    a = solve_elliptic(prob, tol=tol)
    b = solve_via_resolvent(prob, tol=tol)
    assert np.max(np.abs(a.values - b.values)) <= 3 * tol


def test_series_oracle_constants():
    for h in (0.1, 0.5, 1.0):
        value, tail = series_oracle_1d(1, h, 0.3)
        assert value == pytest.approx(1.0, abs=1e-10)
        assert tail <= 1e-10
    assert series_oracle_1d(0, 0.5, [0.0, 1.0])[0].tolist() == [0.0, 0.0]


def test_series_oracle_matches_tridiagonal():
    h = 0.5
    xs, u = tridiagonal_oracle_1d(MODEL_F, h, -60.0, 60.0)
    value, tail = series_oracle_1d(MODEL_F, h, 0.0)
    assert tail <= 1e-10
    assert value == pytest.approx(u[np.argmin(np.abs(xs))], abs=1e-8)


def test_series_oracle_tail_error():
    with pytest.raises(ValueError, match="tail bound"):
        series_oracle_1d(MODEL_F, 0.5, 0.0, n_max=10)


def test_tridiagonal_oracle_satisfies_difference_equation():
    h = 0.25
    xs, u = tridiagonal_oracle_1d("cos(x1)", h, -3.0, 3.0, c=2.0, g_left=1.0, g_right=-1.0)
    res = (u[2:] - 2 * u[1:-1] + u[:-2]) / h ** 2 - 2.0 * u[1:-1] + np.cos(xs[1:-1])
    assert np.max(np.abs(res)) < 1e-12
    assert (u[0], u[-1]) == (1.0, -1.0)


def test_model_problem_solver_matches_oracle():
    prob = get_preset("model-1d")
    u = solve_elliptic(prob, tol=1e-12)
    xs = prob.domain.axes()[0]
    pick = np.abs(xs) <= 5
    values, tail = series_oracle_1d(MODEL_F, prob.h, xs[pick])
    assert np.max(np.abs(u.values[pick] - values)) <= 1e-8
