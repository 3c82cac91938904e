import math

import numpy as np
import pytest

from stencil_lab.lattice import Domain, GridFunction, Stencil, sample
from stencil_lab.operator import CoefficientSet, Problem
from stencil_lab.parabolic import NumericalError, solve_parabolic, stable_dt, verify_max_principle
from stencil_lab.presets import get_preset

PM1 = [(1,), (-1,)]


def problem_1d(q=None, p=None, c=1, f=0, g=0, kind="box", h=0.1, lower=0.0, upper=1.0, T=1.0, **kw):
    return Problem(Domain(kind, (lower,), (upper,), h), Stencil(PM1),
                   CoefficientSet(q=q or {}, p=p or {}, c=c, f=f, g=g), T=T, **kw)


def test_stable_dt_examples():
    prob = problem_1d(q={(1,): 1, (-1,): 1})
    assert stable_dt(prob) == pytest.approx(0.9 / 201, rel=1e-14)
    assert stable_dt(problem_1d()) == pytest.approx(0.9)


def test_stable_dt_scales_with_h_squared():
    q = {(1,): 1, (-1,): 1}
    fine = stable_dt(problem_1d(q=q, c=0, h=0.05, c0=1))
    coarse = stable_dt(problem_1d(q=q, c=0, h=0.1, c0=1))
    assert coarse == pytest.approx(4 * fine)


def test_stable_dt_time_dependent_samples_peak():
    prob = problem_1d(q={(1,): "1 + t", (-1,): "1 + t"}, T=2.0)
    assert stable_dt(prob) == pytest.approx(0.9 / (1 + 2 * 3 / 0.01), rel=1e-12)


def test_exponential_decay():
    prob = problem_1d(g=1, f=0)
    dt = 0.01
    traj = solve_parabolic(prob, dt=dt)
    assert traj.times[0] == 0 and traj.times[-1] == 1.0
    assert traj.final.values[1] == pytest.approx((1 - dt) ** 100, rel=1e-12)
    assert abs(traj.final.values[1] - math.exp(-1)) <= 5 * dt


def test_stationary_solution():
    prob = problem_1d(q={(1,): "1+x1", (-1,): "1+x1"}, c="2+sin(x1)", f="2+sin(x1)", g=1)
    traj = solve_parabolic(prob)
    for s in traj.states:
        np.testing.assert_allclose(s.values, 1.0, atol=1e-12)


def test_final_partial_step():
    traj = solve_parabolic(problem_1d(g=1, T=1.0), dt=0.3)
    assert traj.steps == 4
    assert traj.times == pytest.approx([0, 0.3, 0.6, 0.9, 1.0])
    assert traj.final.values[3] == pytest.approx(0.7 ** 3 * 0.9)


def test_dirichlet_layer_is_held():
    prob = problem_1d(q={(1,): 1, (-1,): 1}, g="1 + x1", f=3)
    traj = solve_parabolic(prob)
    g = sample(prob.coeffs.g, prob.domain).values
    assert traj.final.values[0] == g[0] and traj.final.values[-1] == g[-1]


def _heat(h, dt=None, T=0.5):
    prob = get_preset("heat-periodic", h=h).replace(T=T)
    return solve_parabolic(prob, dt=dt)


def test_heat_equation_against_refined_run():
    h = 2 * math.pi / 16
    coarse = _heat(h)
    fine = _heat(h / 4, dt=coarse.dt / 16)
    ref = fine.final.values[::4]
    exact = np.exp(-2 * 0.5) * np.sin(coarse.problem.domain.axes()[0])
    err_ref = np.max(np.abs(coarse.final.values - ref))
    assert err_ref < 5 * (h ** 2 + coarse.dt)
    assert np.max(np.abs(ref - exact)) < err_ref


def test_time_convergence_is_first_order():
    prob = get_preset("heat-periodic", h=2 * math.pi / 16).replace(T=0.5)
    base = stable_dt(prob)
    dts = [base, base / 2, base / 4, base / 8]
    ref = solve_parabolic(prob, dt=base / 64).final.values
    errs = [np.max(np.abs(solve_parabolic(prob, dt=dt).final.values - ref)) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 1) <= 0.3


def test_comparison_principle():
    base = get_preset("transport-decreasing-b", h=0.1).replace(T=0.5)
    low = base.with_coeffs(f="sin(x1) - 1", g="cos(x1) - 0.5")
    high = base.with_coeffs(f="sin(x1) + x1^2", g="cos(x1)")
    dt = stable_dt(base)
    a, b = solve_parabolic(low, dt=dt), solve_parabolic(high, dt=dt)
    for u1, u2 in zip(a.states, b.states):
        assert np.all(u1.values <= u2.values + 1e-12)


def test_sign_preservation():
    prob = get_preset("degenerate-q-x2").with_coeffs(f="-pos(cos(3*x1))", g="-x1^2")
    traj = solve_parabolic(prob)
    assert max(s.values.max() for s in traj.states) <= 0


def test_non_finite_values_abort_with_step():
    prob = problem_1d(q={(1,): 1, (-1,): 1}, g="sin(3*x1)", f=0)
    with pytest.raises(NumericalError) as info:
        solve_parabolic(prob.replace(T=1000.0), dt=1.0)
    assert info.value.step >= 1


def test_max_principle_exponential_case():
    prob = problem_1d(g=1, f=0, kind="periodic")
    traj = solve_parabolic(prob, dt=0.01)
    rep = verify_max_principle(prob, traj)
    assert rep.nu == pytest.approx(-1)
    assert rep.margin >= -10 * traj.dt
    assert rep.holds
    np.testing.assert_allclose(rep.bound, np.exp(-rep.times), rtol=1e-12)


def test_max_principle_corollary_case():
    prob = get_preset("corollary")
    traj = solve_parabolic(prob)
    rep = verify_max_principle(prob, traj)
    assert rep.nu == pytest.approx(-2)
    assert rep.corollary_bound == pytest.approx(3.0)
    assert rep.corollary_margin >= -1e-8
    interior = traj.final.values[1:-1]
    assert np.all(interior <= 3 + 1e-12)
    assert np.all(interior > 3 - 1e-3)
    assert rep.margin >= -10 * traj.dt


@pytest.mark.parametrize("name", ["heat-periodic", "transport-decreasing-b", "degenerate-q-x2", "constant-2d",
                                  "symmetric"])
def test_max_principle_presets(name):
    prob = get_preset(name)
    traj = solve_parabolic(prob)
    rep = verify_max_principle(prob, traj)
    assert rep.margin >= -10 * traj.dt
    assert len(rep.times) == len(traj.times)


def test_max_principle_with_perturbation_constant():
    prob = problem_1d(q={(1,): 1, (-1,): 1}, g="1 + x1", f="x1")
    traj = solve_parabolic(prob)
    rep = verify_max_principle(prob, traj, C=0.5)
    assert rep.nu == pytest.approx(-0.5)
    assert rep.margin >= -10 * traj.dt


def test_trajectory_csv():
    traj = solve_parabolic(problem_1d(g=1, T=1.0), dt=0.25)
    text = traj.to_csv(every=2)
    lines = text.strip().splitlines()
    assert lines[0] == "n,t,i1,x1,value"
    ns = sorted({int(line.split(",")[0]) for line in lines[1:]})
    assert ns == [0, 2, 4]


def test_initial_override():
    prob = problem_1d(g=0)
    init = GridFunction(prob.domain, np.full(prob.domain.shape, 2.0))
    traj = solve_parabolic(prob, dt=0.5, initial=init)
    assert traj.final.values[3] == pytest.approx(0.5)
