"""Acceptance gate: seven criteria, each at its stated tolerance and runtime budget.

Run ``pytest tests/test_acceptance.py`` and read the "acceptance criteria"
section of the terminal summary for one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest

from stencil_lab.conditions import check_drift_constancy, check_linearity_orthogonality, check_quadratic_form
from stencil_lab.elliptic import series_oracle_1d, solve_elliptic, solve_via_resolvent
from stencil_lab.estimates import gradient_bound_study
from stencil_lab.expr import evaluate_array
from stencil_lab.lattice import Domain, GridFunction, delta, delta2, sample, shift
from stencil_lab.operator import apply_L, consistency_error, rescale
from stencil_lab.parabolic import solve_parabolic, stable_dt, verify_max_principle
from stencil_lab.presets import MANUFACTURED_EXACT, get_preset
from stencil_lab.richardson import combine_levels, extrapolate, observed_order, vandermonde_weights


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False

    def check(self):
        assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


@pytest.mark.criterion(1, "random-walk oracle agrees with the elliptic solver on the 1D model problem")
def test_model_problem_oracle(measured):
    with Budget(10) as budget:
        prob = get_preset("model-1d")
        u = solve_elliptic(prob, tol=1e-10)
        xs = prob.domain.axes()[0]
        pick = np.abs(xs) <= 5
        values, tail = series_oracle_1d(prob.coeffs.f, prob.h, xs[pick], tol=1e-10)
        gap = float(np.max(np.abs(u.values[pick] - values)))
    measured(f"max gap {gap:.2e} over {int(pick.sum())} points, tail {tail:.1e}, {budget.elapsed:.2f}s")
    assert tail <= 1e-10
    assert gap <= 1e-6
    budget.check()


MAX_PRINCIPLE_SUITE = ["heat-periodic", "corollary", "transport-decreasing-b", "degenerate-q-x2", "constant-2d"]


@pytest.mark.criterion(2, "maximum-principle bound holds along 5 parabolic presets")
def test_maximum_principle_suite(measured):
    worst = []
    with Budget(30) as budget:
        for name in MAX_PRINCIPLE_SUITE:
            prob = get_preset(name)
            traj = solve_parabolic(prob)
            rep = verify_max_principle(prob, traj)
            margins = rep.bound - rep.vbar
            worst.append((name, float(margins.min()), traj.dt))
    measured(", ".join(f"{n} {m:.2e}" for n, m, _ in worst) + f"; {budget.elapsed:.2f}s")
    for name, margin, dt in worst:
        assert margin >= -10 * dt, name
    budget.check()


@pytest.mark.criterion(3, "Richardson k=2 reaches order >= 1.6 on the manufactured problem")
def test_richardson_manufactured(measured):
    with Budget(20) as budget:
        base = get_preset("manufactured-cos")
        hs = [math.pi / 8, math.pi / 16, math.pi / 32, math.pi / 64]
        errors = {}
        for k in (0, 2):
            for h in hs if k == 2 else [math.pi / 16]:
                prob = base.with_h(h)
                exact = evaluate_array(MANUFACTURED_EXACT, 0.0, prob.domain.points())
                errors[k, h] = float(np.max(np.abs(extrapolate(prob, k).values - exact)))
        order = observed_order([(h, errors[2, h]) for h in hs])
    e0, e2 = errors[0, math.pi / 16], errors[2, math.pi / 16]
    measured(f"order {order:.3f}, k=2/k=0 error at pi/16 {e2 / e0:.2e}, {budget.elapsed:.2f}s")
    assert order >= 1.6
    assert e2 <= e0 / 4
    budget.check()


@pytest.mark.criterion(4, "gradient bound ratio is h-uniform on the degenerate transport preset")
def test_gradient_uniformity(measured):
    with Budget(60) as budget:
        study = gradient_bound_study(get_preset("transport-decreasing-b"), [0.2, 0.1, 0.05, 0.025])
    measured(f"R = {', '.join(f'{r:.4f}' for r in study.ratios)}; spread {study.spread:.3f}, {budget.elapsed:.2f}s")
    assert study.spread <= 1.5
    budget.check()


@pytest.mark.criterion(5, "condition checkers reproduce the worked examples")
def test_condition_examples(measured):
    with Budget(30) as budget:
        const = check_quadratic_form(get_preset("constant-2d").replace(delta=0.2))
        decreasing = [check_quadratic_form(get_preset("transport-decreasing-b", h=h)) for h in (0.05, 0.025)]
        increasing = check_quadratic_form(get_preset("transport-increasing-b"))
        example = get_preset("drift-example")
        drift = check_drift_constancy(example)
        ortho = check_linearity_orthogonality(example)
    measured(f"(a) {const.verdict} (b) {'/'.join(r.verdict for r in decreasing)} "
             f"(c) {increasing.verdict} {increasing.witness} (d) {drift.verdict}/{ortho.verdict}; "
             f"{budget.elapsed:.2f}s")
    assert const.verdict == "pass"
    assert all(r.verdict == "pass" for r in decreasing)
    assert increasing.verdict == "fail" and increasing.witness.startswith("xi=")
    assert drift.verdict == "pass" and ortho.verdict == "pass"
    budget.check()


@pytest.mark.criterion(6, "consistency orders: symmetric 2, upwind 1")
def test_consistency_orders(measured):
    with Budget(10) as budget:
        orders = {}
        for name in ("symmetric", "upwind"):
            prob = get_preset(name)
            orders[name] = consistency_error(prob, "sin(x1)", [prob.h / 2 ** j for j in range(4)]).order
    measured(f"symmetric {orders['symmetric']:.4f}, upwind {orders['upwind']:.4f}, {budget.elapsed:.2f}s")
    assert abs(orders["symmetric"] - 2) <= 0.3
    assert abs(orders["upwind"] - 1) <= 0.3
    budget.check()


def _comparison_parabolic():
    base = get_preset("degenerate-q-x2")
    low = base.with_coeffs(f="cos(x1) - 1", g="1 + x1 - x1^2")
    high = base.with_coeffs(f="cos(x1) + 0.5", g="1 + x1")
    dt = stable_dt(base)
    a, b = solve_parabolic(low, dt=dt), solve_parabolic(high, dt=dt)
    return min(float(np.min(v.values - u.values)) for u, v in zip(a.states, b.states))


def _comparison_elliptic():
    base = get_preset("transport-decreasing-b", h=0.1)
    u1 = solve_elliptic(base.with_coeffs(f="sin(x1) - 1"), tol=1e-11)
    u2 = solve_elliptic(base.with_coeffs(f="sin(x1) + x1^2"), tol=1e-11)
    return float(np.min(u2.values - u1.values))


def _linearity():
    prob = get_preset("transport-decreasing-b")
    rng = np.random.default_rng(11)
    u = GridFunction(prob.domain, rng.normal(size=prob.domain.shape))
    v = GridFunction(prob.domain, rng.normal(size=prob.domain.shape))
    lhs = apply_L(prob, 2.5 * u - 0.75 * v)
    rhs = 2.5 * apply_L(prob, u) - 0.75 * apply_L(prob, v)
    scale = float(np.max(np.abs(apply_L(prob, u).values)) + np.max(np.abs(apply_L(prob, v).values)))
    op_err = float(np.max(np.abs(lhs.values - rhs.values))) / scale
    w = vandermonde_weights(3)
    dom = get_preset("symmetric", h=2 * math.pi / 8).domain
    levels = lambda seed: [GridFunction(dom.with_h(dom.h / 2 ** j), np.random.default_rng(seed + j).normal(
        size=dom.with_h(dom.h / 2 ** j).shape)) for j in range(4)]
    a, b = levels(1), levels(7)
    mix = combine_levels([1.5 * x - 2 * y for x, y in zip(a, b)], w)
    ref = 1.5 * combine_levels(a, w) - 2 * combine_levels(b, w)
    return op_err, float(np.max(np.abs(mix - ref)))


def _scaling():
    worst = 0.0
    for name in ("symmetric", "upwind", "constant-2d", "transport-decreasing-b"):
        prob = get_preset(name)
        for kappa in (0.5, 4.0):
            scaled = rescale(prob, kappa, keep_K1=True)
            u = sample("sin(x1) + 0.3*x1^2" if prob.dim == 1 else "sin(x1)*cos(2*x2)", prob.domain)
            a = apply_L(prob, u, 0.3)
            b = apply_L(scaled, GridFunction(scaled.domain, u.values), 0.3)
            worst = max(worst, float(np.max(np.abs(a.values - b.values))) / (1 + float(np.max(np.abs(a.values)))))
    return worst


def _difference_identities():
    dom = Domain("periodic", (0.0,), (1.0,), 1 / 64)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        psi = GridFunction(dom, rng.uniform(-1, 1, dom.shape))
        phi = GridFunction(dom, rng.uniform(-1, 1, dom.shape))
        for lam in (1, -1, 3):
            d2 = delta2(psi, lam)
            ident = -delta(delta(psi, -lam), lam)
            worst = max(worst, float(np.max(np.abs(d2.values - ident.values))) * dom.h ** 2)
            prod = delta(psi * phi, lam) - (delta(psi, lam) * shift(phi, lam) + psi * delta(phi, lam))
            worst = max(worst, float(np.max(np.abs(prod.values))) * dom.h)
    return worst


def _resolvent_agreement(tol=1e-10):
    gaps = {}
    for name in ("degenerate-q-x2", "transport-decreasing-b", "manufactured-cos"):
        prob = get_preset(name)
        gaps[name] = float(np.max(np.abs(solve_elliptic(prob, tol=tol).values
                                         - solve_via_resolvent(prob, tol=tol).values)))
    return gaps


@pytest.mark.criterion(7, "structural invariants: comparison, linearity, weights, scaling, identities, resolvent")
def test_structural_invariants(measured):
    with Budget(60) as budget:
        par = _comparison_parabolic()
        ell = _comparison_elliptic()
        op_err, comb_err = _linearity()
        sums = [abs(sum(vandermonde_weights(k).b) - 1) for k in range(9)]
        scale_err = _scaling()
        ident_err = _difference_identities()
        gaps = _resolvent_agreement()
    measured(f"comparison gaps {par:.1e}/{ell:.1e}, linearity {op_err:.1e}/{comb_err:.1e}, "
             f"|sum b - 1| {max(sums):.1e}, scaling {scale_err:.1e}, identities {ident_err:.1e}, "
             f"resolvent {max(gaps.values()):.1e}; {budget.elapsed:.2f}s")
    assert par >= -1e-12
    assert ell >= -1e-12
    assert op_err <= 1e-12 and comb_err <= 1e-12 * 30
    assert max(sums) <= 1e-10
    assert scale_err <= 1e-10
    assert ident_err <= 1e-12
    assert all(g <= 3e-10 for g in gaps.values()), gaps
    budget.check()
