"""Stationary problem ``L u + f = 0`` and the closed-form 1D oracle.

Under ``chi >= 0`` and ``c >= c0 > 0`` the system
``(c + h^-2 sum chi) u(x) = h^-2 sum chi u(x + h lam) + f(x)`` is strictly
diagonally dominant with nonnegative off-diagonal weights, so Gauss-Seidel
converges monotonically and the sup-norm error is at most ``residual / c0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy.linalg import solve_banded

from .expr import Expr, as_expr, evaluate_array, variables
from .lattice import GridFunction, sample
from .operator import DiscreteOperator, Problem
from .parabolic import euler_steps, stable_dt

__all__ = [
    "PreconditionError", "ConvergenceError", "SolveInfo", "solve_elliptic",
    "solve_via_resolvent", "series_oracle_1d", "tridiagonal_oracle_1d", "residual",
]


class PreconditionError(ValueError):
    """Coefficients violate ``chi >= 0`` or ``c >= c0`` on the grid."""


class ConvergenceError(ArithmeticError):
    """Iteration budget exhausted; ``best`` holds the last iterate."""

    def __init__(self, message: str, best: GridFunction, residual: float, iterations: int):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    residual: float
    method: str


@dataclass
class _System:
    """Interior rows of the linear system on the flattened grid."""

    idx: np.ndarray       # flat index of each interior point
    nbr: np.ndarray       # (n, |stencil|) flat indices of x + h*lam
    w: np.ndarray         # (n, |stencil|) weights chi / h^2
    diag: np.ndarray      # c + sum w
    f: np.ndarray
    c: np.ndarray


def _system(prob: Problem, f_expr: Optional[Expr] = None) -> _System:
    dom = prob.domain
    op = DiscreteOperator(prob, 0.0)
    region = op.region
    grid_idx = np.indices(dom.shape)
    sub = [g[region].ravel() for g in grid_idx]
    mode = "wrap" if dom.periodic else "raise"
    idx = np.ravel_multi_index(sub, dom.shape, mode=mode)
    nbr = np.stack([
        np.ravel_multi_index([s + c for s, c in zip(sub, lam)], dom.shape, mode=mode)
        for lam in op.vectors
    ], axis=1) if op.vectors else np.zeros((idx.size, 0), dtype=np.int64)
    h2 = dom.h ** 2
    w = np.stack([x[region].ravel() / h2 for x in op.chi], axis=1) if op.vectors else np.zeros((idx.size, 0))
    c = np.ascontiguousarray(op.c[region].ravel(), dtype=float)
    f_expr = prob.coeffs.f if f_expr is None else f_expr
    f = np.broadcast_to(evaluate_array(f_expr, 0.0, dom.points()), dom.shape)[region].ravel()
    return _System(idx.astype(np.int64), nbr.astype(np.int64), np.ascontiguousarray(w),
                   c + w.sum(axis=1), np.ascontiguousarray(f, dtype=float), c)


def _check_preconditions(prob: Problem, sysm: _System) -> None:
    if prob.time_dependent(include_f=True):
        raise PreconditionError("stationary problem needs time-independent coefficients")
    if sysm.w.size and np.min(sysm.w) < -1e-12 / prob.h ** 2:
        k, j = np.unravel_index(int(np.argmin(sysm.w)), sysm.w.shape)
        raise PreconditionError(f"chi < 0 along {prob.vectors[j]} (value {sysm.w[k, j] * prob.h ** 2:.6g})")
    if sysm.c.size and np.min(sysm.c) < prob.c0 - 1e-12:
        raise PreconditionError(f"c >= c0 = {prob.c0:g} fails (min c = {np.min(sysm.c):.6g})")


@njit(nogil=True, cache=True)
def _gs_sweep(u, idx, nbr, w, diag, f):
    for k in range(idx.size):
        s = f[k]
        for j in range(nbr.shape[1]):
            s += w[k, j] * u[nbr[k, j]]
        u[idx[k]] = s / diag[k]


@njit(nogil=True, cache=True)
def _residual(u, idx, nbr, w, diag, f):
    r = 0.0
    for k in range(idx.size):
        s = f[k] - diag[k] * u[idx[k]]
        for j in range(nbr.shape[1]):
            s += w[k, j] * u[nbr[k, j]]
        if abs(s) > r:
            r = abs(s)
    return r


@njit(nogil=True, cache=True)
def _gs_run(u, idx, nbr, w, diag, f, tol, max_iter, check_every):
    it = 0
    res = _residual(u, idx, nbr, w, diag, f)
    while res > tol and it < max_iter:
        n = min(check_every, max_iter - it)
        for _ in range(n):
            _gs_sweep(u, idx, nbr, w, diag, f)
        it += n
        res = _residual(u, idx, nbr, w, diag, f)
    return it, res


def _jacobi_run(u, s: _System, tol, max_iter, check_every):
    it = 0
    res = _residual(u, s.idx, s.nbr, s.w, s.diag, s.f)
    while res > tol and it < max_iter:
        for _ in range(min(check_every, max_iter - it)):
            u[s.idx] = (s.f + np.einsum("kj,kj->k", s.w, u[s.nbr])) / s.diag
            it += 1
        res = _residual(u, s.idx, s.nbr, s.w, s.diag, s.f)
    return it, res


def residual(prob: Problem, u: GridFunction) -> float:
    """``sup |L u + f|`` over the interior."""
    s = _system(prob)
    return float(_residual(np.ascontiguousarray(u.values.ravel()), s.idx, s.nbr, s.w, s.diag, s.f))


def solve_elliptic(prob: Problem, tol: float = 1e-10, max_iter: int = 1_000_000,
                   method: str = "gauss-seidel", initial: Optional[GridFunction] = None,
                   return_info: bool = False):
    """Solve ``L u + f = 0`` with the Dirichlet layer of a box fixed at ``g``.

    Iterates until the sup-norm residual is at most ``tol``.  ``method`` is
    ``"gauss-seidel"`` (default) or ``"jacobi"``.
    """
    if method not in ("gauss-seidel", "jacobi"):
        raise ValueError(f"unknown method {method!r}")
    s = _system(prob)
    _check_preconditions(prob, s)
    dom = prob.domain
    if initial is not None:
        u = np.array(initial.values, dtype=float).ravel()
    else:
        u = np.array(sample(prob.coeffs.g, dom, 0.0).values).ravel()
        u[s.idx] = s.f / s.c
    check_every = max(1, min(50, max_iter))
    if method == "gauss-seidel":
        it, res = _gs_run(u, s.idx, s.nbr, s.w, s.diag, s.f, tol, max_iter, check_every)
    else:
        it, res = _jacobi_run(u, s, tol, max_iter, check_every)
    out = GridFunction(dom, u.reshape(dom.shape), None)
    if not math.isfinite(res):
        raise ConvergenceError("non-finite residual", out, res, int(it))
    if res > tol:
        raise ConvergenceError(f"residual {res:.3e} > tol {tol:.1e} after {it} sweeps", out, float(res), int(it))
    if return_info:
        return out, SolveInfo(int(it), float(res), method)
    return out


def solve_via_resolvent(prob: Problem, tol: float = 1e-10, max_steps: int = 50_000_000) -> GridFunction:
    """Solve ``L u + f = 0`` as a Laplace transform of a parabolic flow.

    With ``nu = c0 / 2``, ``v`` solves ``D_t v = (L + nu) v`` from ``v(0) = f``
    by explicit Euler, the box layer held at ``nu * g``.  The quadrature uses
    the discrete weights ``dt (1 + nu dt)^-(n+1)`` in place of
    ``e^{-nu t} dt``; these make the sum equal the solution of the linear
    system exactly, so only the truncated tail (bounded by ``tol / 2``)
    separates the result from ``solve_elliptic``.
    """
    s = _system(prob)
    _check_preconditions(prob, s)
    nu = prob.c0 / 2
    dom = prob.domain
    shifted = prob.with_coeffs(c=prob.coeffs.c - nu, f=0)
    dt = stable_dt(shifted)
    rho = 1.0 / (1.0 + nu * dt)
    v0 = np.zeros(dom.shape)
    g = sample(prob.coeffs.g, dom, 0.0).values
    layer = np.ones(dom.shape, dtype=bool)
    layer.flat[s.idx] = False
    v0[layer] = nu * g[layer]
    v0.flat[s.idx] = s.f
    vmax = float(np.max(np.abs(v0))) if v0.size else 0.0
    if vmax == 0.0:
        return GridFunction(dom, np.zeros(dom.shape))
    # sup|v_n| <= vmax, so the tail after n steps is at most rho^n vmax / nu
    n_steps = int(math.ceil(math.log(tol / 2 * nu / vmax) / math.log(rho))) if tol / 2 * nu < vmax else 0
    if n_steps > max_steps:
        raise ConvergenceError(f"resolvent needs {n_steps} steps > {max_steps}",
                               GridFunction(dom, v0), math.inf, 0)
    acc = v0 * dt * rho
    weight = dt * rho
    for _, _, v in euler_steps(shifted, v0, [dt] * n_steps, f_on=False):
        weight *= rho
        acc += weight * v
    return GridFunction(dom, acc)


def series_oracle_1d(f, h: float, x, n_max: Optional[int] = None, tol: float = 1e-10,
                     f_bound: Optional[float] = None):
    """Random-walk series for ``(u(x+h) - 2u(x) + u(x-h)) / h^2 - u + f = 0``.

    ``u(x) = sum_n h^2/(2+h^2) r^n E f(x + h S_n)`` with ``r = 2/(2+h^2)`` and
    ``S_n`` a simple symmetric walk; each expectation is an exact binomial
    average.  Returns ``(values, tail_bound)`` where the tail is
    ``r^(n_max+1) sup|f|``.  ``f_bound`` defaults to ``sup|f|`` over the
    lattice points the walk visits.
    """
    f = as_expr(f)
    if variables(f) - {"x1"}:
        raise ValueError("oracle expects f of x1 only")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    r = 2.0 / (2.0 + h * h)

    def walk_values(n):
        offsets = h * np.arange(-n, n + 1)
        vals = evaluate_array(f, 0.0, [xs[:, None] + offsets[None, :]])
        return np.broadcast_to(vals, (xs.size, offsets.size))

    def steps_for(bound):
        return 0 if bound <= tol else int(math.ceil(math.log(tol / bound) / math.log(r))) - 1

    if n_max is None:
        n_max = steps_for(f_bound if f_bound is not None else 1.0)
        while f_bound is None:
            need = steps_for(float(np.max(np.abs(walk_values(n_max)))))
            if need <= n_max:
                break
            n_max = need
    fv = walk_values(n_max)
    sup_f = float(np.max(np.abs(fv))) if f_bound is None else float(f_bound)
    tail = r ** (n_max + 1) * sup_f
    if tail > tol:
        raise ValueError(f"tail bound {tail:.3e} exceeds tolerance {tol:.1e} at n_max={n_max}")
    probs = np.zeros(2 * n_max + 1)
    probs[n_max] = 1.0
    scale = h * h / (2.0 + h * h)
    total = np.zeros(xs.size)
    coef = scale
    for n in range(n_max + 1):
        total += coef * (fv @ probs)
        nxt = np.zeros_like(probs)
        nxt[1:] += 0.5 * probs[:-1]
        nxt[:-1] += 0.5 * probs[1:]
        probs = nxt
        coef *= r
    return (total if np.ndim(x) else float(total[0])), tail


def tridiagonal_oracle_1d(f, h: float, lower: float, upper: float, c: float = 1.0,
                          g_left: float = 0.0, g_right: float = 0.0):
    """Direct banded solve of ``(u(x+h) - 2u(x) + u(x-h)) / h^2 - c u + f = 0`` on a box.

    Returns ``(x, u)`` including the two Dirichlet end points.
    """
    n = int(round((upper - lower) / h))
    xs = lower + h * np.arange(n + 1)
    fv = np.broadcast_to(evaluate_array(as_expr(f), 0.0, [xs]), xs.shape).astype(float)
    m = n - 1
    ab = np.zeros((3, m))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0 + c * h * h
    ab[2, :-1] = -1.0
    rhs = h * h * fv[1:-1]
    rhs[0] += g_left
    rhs[-1] += g_right
    u = np.empty(n + 1)
    u[0], u[-1] = g_left, g_right
    u[1:-1] = solve_banded((1, 1), ab, rhs)
    return xs, u
