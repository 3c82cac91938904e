"""Explicit time stepping of ``u(t) = g + int_0^t (L u + f) ds`` and the maximum principle.

The step ``dt`` keeps ``dt * (c + h^-2 sum chi)`` at or below 0.9, so every
Euler update is a nonnegative combination of neighbour values plus
``dt * f``.  That positivity is what makes discrete comparison and maximum
principles exact in floating point, and it is why the stepper is first
order in time on purpose.

On a box the Dirichlet layer (points where some stencil shift leaves the
box) is held at the time-constant extension of ``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .expr import as_expr, evaluate_array, variables
from .lattice import GridFunction, sample
from .operator import DiscreteOperator, Problem
from .reports import write_csv

__all__ = [
    "NumericalError", "Trajectory", "MaxPrincipleReport",
    "stable_dt", "solve_parabolic", "verify_max_principle", "euler_steps",
]

SAFETY = 0.9


class NumericalError(ArithmeticError):
    """Overflow or NaN during time stepping."""

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} at step {step}")


def _rate_sup(prob: Problem, times) -> float:
    return max(float(np.max(DiscreteOperator(prob, float(t)).diagonal())) for t in times)


def stable_dt(prob: Problem, t_samples: int = 17, max_samples: int = 4096) -> float:
    """``0.9 / sup (c + h^-2 sum chi)`` over the grid and sampled times.

    Time-dependent coefficients are sampled on a uniform grid first, then
    again at the resulting step resolution; the smaller step wins.
    """
    if not prob.time_dependent(include_f=False):
        rate = _rate_sup(prob, [0.0])
    else:
        rate = _rate_sup(prob, np.linspace(0.0, prob.T, t_samples))
        if rate > 0:
            n = min(max_samples, int(math.ceil(prob.T * rate / SAFETY)) + 1)
            rate = max(rate, _rate_sup(prob, np.linspace(0.0, prob.T, n)))
    if not rate > 0:
        raise ValueError("c + h^-2 sum chi is not positive anywhere; no stable step exists")
    return SAFETY / rate


@dataclass
class Trajectory:
    """States of a parabolic solve at the stored times (``times[0] = 0``)."""

    problem: Problem
    times: list
    states: list
    dt: float
    steps: int

    @property
    def final(self) -> GridFunction:
        return self.states[-1]

    def to_csv(self, target=None, every: int = 1) -> str:
        """Long-format dump: step index, time, lattice index, coordinates, value."""
        dom = self.problem.domain
        d = dom.dim
        pts = [p.ravel() for p in dom.points()]
        idx = np.indices(dom.shape).reshape(d, -1)
        header = ["n", "t", *[f"i{k + 1}" for k in range(d)], *[f"x{k + 1}" for k in range(d)], "value"]

        def rows():
            for n, (t, s) in enumerate(zip(self.times, self.states)):
                if n % every and n != len(self.times) - 1:
                    continue
                vals = s.values.ravel()
                for j in range(vals.size):
                    yield (n, t, *idx[:, j].tolist(), *[p[j] for p in pts], vals[j])

        return write_csv(target, header, rows())


def _step_plan(T: float, dt: float) -> list:
    n_full = int(math.floor(T / dt * (1 + 1e-12)))
    steps = [dt] * n_full
    rest = T - n_full * dt
    if rest > 1e-12 * T:
        steps.append(rest)
    return steps


def euler_steps(prob: Problem, values: np.ndarray, steps, t0: float = 0.0, f_on: bool = True):
    """Generator of ``(n, t, values)`` after each explicit Euler step.

    ``values`` is the full grid; on a box its Dirichlet layer is left as
    given.  The array yielded is reused between steps.
    """
    dom = prob.domain
    pts = dom.points()
    coeffs_dep_t = prob.time_dependent(include_f=False)
    f_expr = prob.coeffs.f
    f_dep_t = "t" in variables(f_expr)
    op = DiscreteOperator(prob, t0, pts)
    region = op.region

    def f_region(t):
        if not f_on:
            return 0.0
        return np.broadcast_to(evaluate_array(f_expr, t, pts), dom.shape)[region]

    f_reg = f_region(t0)
    u = np.array(values, dtype=float)
    t = t0
    for n, dt in enumerate(steps, start=1):
        if coeffs_dep_t and n > 1:
            op = DiscreteOperator(prob, t, pts)
        if f_dep_t and n > 1:
            f_reg = f_region(t)
        with np.errstate(over="ignore", invalid="ignore"):
            update = op.L_region(u) + f_reg
            u[region] = u[region] + dt * update
        t = t + dt
        if not np.all(np.isfinite(u[region])):
            raise NumericalError("non-finite value", n)
        yield n, t, u


def solve_parabolic(prob: Problem, dt: Optional[float] = None, initial: Optional[GridFunction] = None,
                    store_every: int = 1) -> Trajectory:
    """Explicit Euler on ``[0, T]``: ``u_{n+1} = u_n + dt (L u_n + f(t_n))``.

    The step is uniform except for a final partial step landing on ``T``.
    ``initial`` overrides ``g`` (including the Dirichlet layer on a box).
    """
    if dt is None:
        dt = stable_dt(prob)
    if initial is None:
        initial = sample(prob.coeffs.g, prob.domain, 0.0)
    elif initial.domain != prob.domain:
        raise ValueError("initial data lives on another domain")
    steps = _step_plan(prob.T, dt)
    times = [0.0]
    states = [GridFunction(prob.domain, initial.values, 0.0)]
    last = len(steps)
    for n, t, u in euler_steps(prob, initial.values, steps):
        if n % store_every == 0 or n == last:
            t_store = prob.T if n == last else t
            times.append(t_store)
            states.append(GridFunction(prob.domain, u.copy(), t_store))
    return Trajectory(prob, times, states, dt, last)


@dataclass
class MaxPrincipleReport:
    """Comparison of ``sup_x v(t)`` with the bound ``G(t) e^{nu t} + int_0^t F e^{nu (t-s)} ds``.

    ``margin`` is the smallest ``bound - vbar`` over the stored times.  When
    ``nu < 0`` the simpler bound ``sup v_+ on the parabolic boundary +
    sup F / |nu|`` is also checked (``corollary_margin``).
    """

    nu: float
    times: np.ndarray
    vbar: np.ndarray
    bound: np.ndarray
    margin: float
    worst_time: float
    corollary_bound: Optional[np.ndarray] = None
    corollary_margin: Optional[float] = None
    dt: float = math.nan

    @property
    def holds(self) -> bool:
        """``margin >= 0`` up to rounding in the exponential weights."""
        scale = max(1.0, float(np.max(np.abs(self.bound))))
        return self.margin >= -1e-12 * scale

    def to_csv(self, target=None) -> str:
        cb = self.corollary_bound if self.corollary_bound is not None else [None] * len(self.times)
        rows = ((t, v, b, b - v, c) for t, v, b, c in zip(self.times, self.vbar, self.bound, cb))
        return write_csv(target, ("t", "vbar", "bound", "margin", "corollary_bound"), rows)


def _sup_f_plus(prob: Problem, region, pts):
    def F(t):
        f = np.broadcast_to(evaluate_array(prob.coeffs.f, t, pts), prob.domain.shape)[region]
        return float(max(0.0, np.max(f))) if f.size else 0.0
    return F


def verify_max_principle(prob: Problem, traj: Trajectory, C=0.0,
                         F: Optional[Callable[[float], float]] = None) -> MaxPrincipleReport:
    """Evaluate the maximum-principle bound along a trajectory.

    ``C`` is the (constant or expression) coefficient of ``sup v_+`` allowed
    on the right of the differential inequality and ``F`` the forcing
    envelope; by default ``F(t) = sup_x f_+(t, x)`` which makes the solver
    output an admissible ``v``.  The integral is a cumulative trapezoid at
    the trajectory times.
    """
    dom = prob.domain
    pts = dom.points()
    op = DiscreteOperator(prob, 0.0, pts)
    region = op.region
    interior = np.zeros(dom.shape, dtype=bool)
    interior[region] = True
    layer = ~interior
    C = as_expr(C)
    if F is None:
        F = _sup_f_plus(prob, region, pts)

    times = np.asarray(traj.times, dtype=float)
    nu = -math.inf
    for t in times:
        c = np.broadcast_to(evaluate_array(prob.coeffs.c, t, pts), dom.shape)[region]
        cc = np.broadcast_to(evaluate_array(C, t, pts), dom.shape)[region]
        if np.any(cc < 0):
            raise ValueError("C must be nonnegative")
        nu = max(nu, float(np.max(cc - c)))

    vbar = np.array([float(np.max(s.values)) for s in traj.states])
    g_layer = np.array([
        float(np.max(np.maximum(s.values[layer], 0.0))) if layer.any() else 0.0
        for s in traj.states
    ])
    g0 = float(np.max(np.maximum(traj.states[0].values, 0.0)))
    G = np.maximum.accumulate(np.maximum(g0, np.exp(-nu * times) * g_layer))
    Fv = np.array([F(float(t)) for t in times])
    if np.any(Fv < 0):
        raise ValueError("F must be nonnegative")
    weighted = Fv * np.exp(-nu * times)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (weighted[1:] + weighted[:-1]))])
    bound = np.exp(nu * times) * (G + integral)
    margins = bound - vbar
    worst = int(np.argmin(margins))

    cb = cm = None
    if nu < 0:
        boundary_sup = np.maximum.accumulate(np.maximum(g0, g_layer))
        cb = boundary_sup + np.maximum.accumulate(Fv) / abs(nu)
        cm = float(np.min(cb - vbar))
    return MaxPrincipleReport(nu, times, vbar, bound, float(margins[worst]), float(times[worst]),
                              cb, cm, traj.dt)
