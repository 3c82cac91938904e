"""Pointwise sufficient conditions for the mesh-independent estimates.

Every check samples the full lattice at a set of times and reports its
worst margin (positive means slack) with the place it occurred.  A check
fails exactly when that margin is below ``-tolerance``.

Notation used below: ``r_lam = sqrt(q_lam)``; ``d_lam g`` is the forward
difference ``(g(x + h lam) - g(x)) / h`` of a coefficient expression,
evaluated off-grid where needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from numba import njit

from . import expr as ex
from .expr import evaluate_array
from .operator import Problem, limit_expressions
from .reports import fmt, write_csv

__all__ = [
    "SampleSpec", "CheckRecord", "AssumptionReport", "CHECKS",
    "check_positivity", "check_symmetry_S", "check_drift_constancy",
    "check_linearity_orthogonality", "check_quadratic_form", "check_rough_condition",
    "check_explicit_1d", "check_nondegenerate_shortcut", "run_checks",
    "jacobi_eigh", "linear_functions",
]

PASS, FAIL, NA = "pass", "fail", "not-applicable"
TOL_FLOAT = 1e-12
TOL_EIG = 1e-9
TOL_DERIV = 1e-10


@dataclass(frozen=True)
class SampleSpec:
    """Where conditions are sampled: every ``stride``-th lattice point at ``t_samples`` times.

    Time-independent problems are sampled at ``t = 0`` only.
    """

    t_samples: int = 17
    stride: int = 1

    def times(self, prob: Problem) -> np.ndarray:
        if not prob.time_dependent(include_f=False) or self.t_samples <= 1:
            return np.array([0.0])
        return np.linspace(0.0, prob.T, self.t_samples)

    def points(self, prob: Problem) -> list:
        pts = prob.domain.points()
        sl = tuple(slice(None, None, self.stride) for _ in range(prob.dim))
        return [p[sl].ravel() for p in pts]


@dataclass
class CheckRecord:
    name: str
    verdict: str
    margin: float
    tolerance: float
    t: Optional[float] = None
    x: Optional[tuple] = None
    witness: str = ""
    h: Optional[float] = None
    details: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL


@dataclass
class _Sub:
    """One scalar inequality inside a check."""

    label: str
    margin: float
    tol: float
    t: Optional[float] = None
    x: Optional[tuple] = None
    witness: str = ""


def _combine(name: str, subs: Sequence[_Sub], h: float, **details) -> CheckRecord:
    worst = min(subs, key=lambda s: s.margin + s.tol)
    verdict = FAIL if worst.margin < -worst.tol else PASS
    info = {s.label: s.margin for s in subs}
    info.update(details)
    return CheckRecord(name, verdict, worst.margin, worst.tol, worst.t, worst.x,
                       worst.witness, h, info)


def _na(name: str, reason: str, h: float) -> CheckRecord:
    return CheckRecord(name, NA, math.nan, 0.0, h=h, details={"reason": reason})


class _Samples:
    """Coefficient values at the sample points, with off-grid shifts."""

    def __init__(self, prob: Problem, spec: Optional[SampleSpec]):
        spec = spec or SampleSpec()
        self.prob = prob
        self.times = spec.times(prob)
        self.X = spec.points(prob)
        self.n = self.X[0].size
        self.h = prob.h

    def val(self, e, t, lam=None, strict=True) -> np.ndarray:
        X = self.X if lam is None else [x + self.h * c for x, c in zip(self.X, lam)]
        return np.broadcast_to(evaluate_array(e, t, X, strict=strict), (self.n,)).astype(float)

    def point(self, k: int) -> tuple:
        return tuple(float(x[k]) for x in self.X)

    def worst(self, label, margins: np.ndarray, tol: float, witness=None) -> _Sub:
        """``margins`` has shape (times, points); ``witness`` maps (i, k) to text."""
        i, k = np.unravel_index(int(np.nanargmin(margins)), margins.shape)
        w = witness(i, k) if witness else ""
        return _Sub(label, float(margins[i, k]), tol, float(self.times[i]), self.point(k), w)


def _neg(lam) -> tuple:
    return tuple(-c for c in lam)


def _fmt_vec(v) -> str:
    return "(" + " ".join(fmt(float(c)) if not isinstance(c, (int, np.integer)) else str(c) for c in v) + ")"


def _chi_table(S: _Samples, t):
    p = S.prob
    return np.array([S.val(p.coeffs.q_of(l), t) + S.h * S.val(p.coeffs.p_of(l), t) for l in p.vectors])


# ---------------------------------------------------------------- structural


def check_positivity(prob: Problem, spec: Optional[SampleSpec] = None) -> CheckRecord:
    """``chi_lam >= 0`` and ``c >= c0`` at every sample."""
    S = _Samples(prob, spec)
    vecs = prob.vectors
    chi_m = np.empty((S.times.size, S.n))
    chi_arg = np.zeros((S.times.size, S.n), dtype=int)
    c_m = np.empty((S.times.size, S.n))
    for i, t in enumerate(S.times):
        chi = _chi_table(S, t)
        if len(vecs):
            chi_arg[i] = np.argmin(chi, axis=0)
            chi_m[i] = np.min(chi, axis=0)
        else:
            chi_m[i] = math.inf
        c_m[i] = S.val(prob.coeffs.c, t) - prob.c0
    subs = [S.worst("chi_margin", chi_m, TOL_FLOAT, lambda i, k: f"lambda={_fmt_vec(vecs[chi_arg[i, k]])}")]
    subs.append(S.worst("c_margin", c_m, TOL_FLOAT))
    return _combine("positivity", subs, prob.h)


def check_symmetry_S(prob: Problem, spec: Optional[SampleSpec] = None) -> CheckRecord:
    """The stencil is symmetric and ``q_lam = q_{-lam}``."""
    vecs = prob.vectors
    missing = [l for l in vecs if _neg(l) not in vecs]
    if missing:
        sub = _Sub("set_symmetry", -math.inf, 0.0, witness=f"lambda={_fmt_vec(missing[0])} without its negative")
        return _combine("symmetry_S", [sub], prob.h)
    S = _Samples(prob, spec)
    diff = np.zeros((S.times.size, S.n))
    arg = np.zeros((S.times.size, S.n), dtype=int)
    for i, t in enumerate(S.times):
        for j, l in enumerate(vecs):
            d = np.abs(S.val(prob.coeffs.q_of(l), t) - S.val(prob.coeffs.q_of(_neg(l)), t))
            better = d > diff[i]
            diff[i] = np.where(better, d, diff[i])
            arg[i] = np.where(better, j, arg[i])
    sub = S.worst("q_symmetry", -diff, TOL_FLOAT, lambda i, k: f"lambda={_fmt_vec(vecs[arg[i, k]])}")
    return _combine("symmetry_S", [_Sub("set_symmetry", 0.0, 0.0), sub], prob.h)


def check_drift_constancy(prob: Problem, spec: Optional[SampleSpec] = None) -> CheckRecord:
    """``sum_lam lam q_lam`` does not depend on ``x`` (checked per time sample)."""
    S = _Samples(prob, spec)
    subs = []
    for t in S.times:
        total = np.zeros((prob.dim, S.n))
        for l in prob.vectors:
            total += np.outer(np.asarray(l, dtype=float), S.val(prob.coeffs.q_of(l), t))
        spread = np.max(total, axis=1) - np.min(total, axis=1)
        j = int(np.argmax(spread))
        mag = float(np.max(np.abs(total))) if total.size else 0.0
        k = int(np.argmax(total[j]))
        subs.append(_Sub("spread", -float(spread[j]), 1e-10 * (1 + mag), float(t), S.point(k),
                         f"component={j + 1}"))
    return _combine("drift_constancy", subs, prob.h)


def linear_functions(vectors: Sequence[tuple], pivot_tol: float = 1e-12) -> np.ndarray:
    """Basis (rows) of functions ``phi`` on the stencil that are additive on it.

    Constraints: ``phi(lam + mu) = phi(lam) + phi(mu)`` whenever ``lam``,
    ``mu`` and ``lam + mu`` all lie in the stencil or at 0 (``phi(0) = 0``).
    """
    vecs = [tuple(v) for v in vectors]
    n = len(vecs)
    index = {v: i for i, v in enumerate(vecs)}
    zero = tuple(0 for _ in vecs[0]) if vecs else ()
    rows = []
    ext = vecs + [zero]
    for a in ext:
        for b in ext:
            s = tuple(x + y for x, y in zip(a, b))
            if s not in index and s != zero:
                continue
            row = np.zeros(n)
            if s in index:
                row[index[s]] += 1
            if a in index:
                row[index[a]] -= 1
            if b in index:
                row[index[b]] -= 1
            if np.any(row):
                rows.append(row)
    M = np.array(rows) if rows else np.zeros((0, n))
    # reduced row echelon form
    pivots = []
    r = 0
    for col in range(n):
        if r >= M.shape[0]:
            break
        piv = r + int(np.argmax(np.abs(M[r:, col])))
        if abs(M[piv, col]) <= pivot_tol:
            continue
        M[[r, piv]] = M[[piv, r]]
        M[r] /= M[r, col]
        for other in range(M.shape[0]):
            if other != r:
                M[other] -= M[other, col] * M[r]
        pivots.append(col)
        r += 1
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for fcol in free:
        v = np.zeros(n)
        v[fcol] = 1.0
        for row, pc in enumerate(pivots):
            v[pc] = -M[row, fcol]
        basis.append(v)
    return np.array(basis).reshape(len(basis), n)


def check_linearity_orthogonality(prob: Problem, spec: Optional[SampleSpec] = None) -> CheckRecord:
    """``sum_lam (D_i q_lam) phi(lam) = 0`` for every additive ``phi`` and axis ``i``.

    Reported as a diagnostic; passing does not assert the converse.
    """
    basis = linear_functions(prob.vectors)
    if basis.shape[0] == 0:
        return _combine("linearity_orthogonality", [_Sub("orthogonality", 0.0, TOL_DERIV)], prob.h,
                        basis_size=0)
    S = _Samples(prob, spec)
    dq = [[ex.differentiate(prob.coeffs.q_of(l), f"x{i + 1}") for l in prob.vectors] for i in range(prob.dim)]
    worst = np.zeros((S.times.size, S.n))
    tag = np.zeros((S.times.size, S.n, 2), dtype=int)
    for it, t in enumerate(S.times):
        for i in range(prob.dim):
            vals = np.array([S.val(e, t) for e in dq[i]])
            for b, phi in enumerate(basis):
                s = np.abs(phi @ vals)
                better = s > worst[it]
                worst[it] = np.where(better, s, worst[it])
                tag[it, better] = (b, i)
    sub = S.worst("orthogonality", -worst, TOL_DERIV,
                  lambda a, k: f"phi={_fmt_vec(basis[tag[a, k, 0]])} axis={tag[a, k, 1] + 1}")
    return _combine("linearity_orthogonality", [sub], prob.h, basis_size=int(basis.shape[0]))


# ---------------------------------------------------------------- quadratic forms


@njit(cache=True)
def jacobi_eigh(a):
    """Eigenvalues and eigenvectors (columns) of a symmetric matrix by cyclic Jacobi rotations."""
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    for _ in range(100):
        off = 0.0
        total = 0.0
        for i in range(n):
            for j in range(n):
                total += a[i, j] * a[i, j]
                if i != j:
                    off += a[i, j] * a[i, j]
        if off <= 1e-30 * total or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, v


@njit(cache=True)
def _min_eig_batch(mats):
    m = mats.shape[0]
    n = mats.shape[1]
    mins = np.empty(m)
    vecs = np.empty((m, n))
    for k in range(m):
        w, v = jacobi_eigh(mats[k])
        j = np.argmin(w)
        mins[k] = w[j]
        vecs[k] = v[:, j]
    return mins, vecs


def _structure_prereq(prob: Problem, S: _Samples) -> Optional[str]:
    vecs = prob.vectors
    if any(_neg(l) not in vecs for l in vecs):
        return "stencil is not symmetric"
    for t in S.times:
        for l in vecs:
            q = S.val(prob.coeffs.q_of(l), t)
            if np.any(np.abs(q - S.val(prob.coeffs.q_of(_neg(l)), t)) > TOL_FLOAT):
                return f"q_lambda != q_-lambda for lambda={_fmt_vec(l)}"
            if np.any(q < -TOL_FLOAT):
                return f"q < 0 for lambda={_fmt_vec(l)}"
            if np.any(S.val(prob.coeffs.p_of(l), t) < -TOL_FLOAT):
                return f"p < 0 for lambda={_fmt_vec(l)}"
    return None


def _differences(prob: Problem, S: _Samples, t):
    """``dr[l, m] = d_l r_m`` and ``dp[l, m] = d_l p_m`` at the samples, plus ``chi``, ``q`` and ``c``."""
    vecs = prob.vectors
    n = len(vecs)
    r0 = [np.sqrt(np.maximum(S.val(prob.coeffs.q_of(m), t), 0.0)) for m in vecs]
    p0 = [S.val(prob.coeffs.p_of(m), t) for m in vecs]
    dr = np.empty((n, n, S.n))
    dp = np.empty((n, n, S.n))
    for a, l in enumerate(vecs):
        for b, m in enumerate(vecs):
            r_sh = np.sqrt(np.maximum(S.val(prob.coeffs.q_of(m), t, l), 0.0))
            dr[a, b] = (r_sh - r0[b]) / S.h
            dp[a, b] = (S.val(prob.coeffs.p_of(m), t, l) - p0[b]) / S.h
    q = np.array([S.val(prob.coeffs.q_of(m), t) for m in vecs])
    chi = q + S.h * np.array(p0)
    c = S.val(prob.coeffs.c, t)
    return dr, dp, chi, q, c


def quadratic_form_matrices(prob: Problem, t: float, spec: Optional[SampleSpec] = None):
    """Left (``A``) and right (``B``) quadratic forms in ``xi`` at each sample, shape (points, n, n)."""
    S = _Samples(prob, spec)
    return _forms(prob, S, t)


def _forms(prob: Problem, S: _Samples, t):
    delta, K1, h = prob.delta, prob.K1, S.h
    vecs = prob.vectors
    n = len(vecs)
    dr, dp, chi, _, c = _differences(prob, S, t)
    drT = np.moveaxis(dr, 2, 0)            # (N, lam, mu)
    dpT = np.moveaxis(dp, 2, 0)
    J1 = np.sum(drT ** 2, axis=2)          # per lam
    M = np.einsum("klm,knm->kln", drT, drT)
    abs_dp = np.sum(np.abs(dpT), axis=2)
    C = dpT + drT ** 2
    A = (2.0 / (1 - 4 * delta)) * M + (C + np.swapaxes(C, 1, 2))
    diag = (10.0 / (1 - 4 * delta)) * J1 + 2 * delta * abs_dp
    A[:, np.arange(n), np.arange(n)] += diag
    chiT = chi.T                           # (N, lam)
    B = np.zeros((S.n, n, n))
    B[:, np.arange(n), np.arange(n)] = ((2 - 8 * delta) * c)[:, None] + K1 * chiT
    for a, l in enumerate(vecs):
        b = vecs.index(_neg(l))
        e = np.zeros(n)
        e[a] += 1
        e[b] += 1
        B += (delta / h ** 2) * chiT[:, a, None, None] * np.outer(e, e)[None]
    return A, B, dr, dp, chi, c


def check_quadratic_form(prob: Problem, spec: Optional[SampleSpec] = None) -> CheckRecord:
    """The quadratic-form inequality in ``xi`` together with its two budget conditions.

    The per-pair slacks ``r_{lam mu}``, ``p_{lam mu}`` are the smallest
    nonnegative values making the pointwise difference-quotient bounds hold;
    their budgets are then checked as separate margins.
    """
    name = "quadratic_form"
    if not 0 < prob.delta < 0.25:
        return _na(name, "delta must lie in (0, 1/4)", prob.h)
    S = _Samples(prob, spec)
    reason = _structure_prereq(prob, S)
    if reason:
        return _na(name, reason, prob.h)
    vecs = prob.vectors
    delta, h = prob.delta, S.h
    eig = np.empty((S.times.size, S.n))
    xis = np.empty((S.times.size, S.n, len(vecs)))
    r_budget = np.empty((S.times.size, S.n))
    p_budget = np.empty((S.times.size, S.n))
    r_arg = np.zeros((S.times.size, S.n), dtype=int)
    p_arg = np.zeros((S.times.size, S.n), dtype=int)
    for i, t in enumerate(S.times):
        A, B, dr, dp, chi, c = _forms(prob, S, t)
        mins, vecs_min = _min_eig_batch(np.ascontiguousarray(B - A))
        eig[i] = mins
        xis[i] = vecs_min
        pair = (chi[:, None, :] + chi[None, :, :]) / h ** 2       # chi_mu + chi_lam over h^2, axes (lam, mu)
        r2 = np.maximum(0.0, dr ** 2 - delta * pair)
        pl = np.maximum(0.0, np.abs(dp) - delta ** 2 * pair) / delta
        r_sup, p_sup = np.max(r2, axis=0), np.max(pl, axis=0)
        r_budget[i] = 2 * delta * c - np.sum(r_sup, axis=0)
        p_budget[i] = delta * c - np.sum(p_sup, axis=0)
        r_arg[i] = np.argmax(r_sup, axis=0)
        p_arg[i] = np.argmax(p_sup, axis=0)
    subs = [
        S.worst("min_eigenvalue", eig, TOL_EIG, lambda a, k: f"xi={_fmt_vec(xis[a, k])}"),
        S.worst("r_budget", r_budget, TOL_FLOAT, lambda a, k: f"mu={_fmt_vec(vecs[r_arg[a, k]])}"),
        S.worst("p_budget", p_budget, TOL_FLOAT, lambda a, k: f"mu={_fmt_vec(vecs[p_arg[a, k]])}"),
    ]
    return _combine(name, subs, prob.h, stencil=[_fmt_vec(v) for v in vecs])


def check_rough_condition(prob: Problem, spec: Optional[SampleSpec] = None) -> CheckRecord:
    """Per-direction scalar inequality implying the quadratic form for small ``delta``."""
    name = "rough_condition"
    S = _Samples(prob, spec)
    reason = _structure_prereq(prob, S)
    if reason:
        return _na(name, reason, prob.h)
    vecs = prob.vectors
    marg = np.empty((S.times.size, S.n))
    arg = np.zeros((S.times.size, S.n), dtype=int)
    for i, t in enumerate(S.times):
        dr, dp, _, q, c = _differences(prob, S, t)
        t1 = 10 * np.sum(dr ** 2, axis=1)
        M = np.einsum("lmk,nmk->lnk", dr, dr)
        t2 = 4 * np.sum(np.abs(M), axis=1)
        sym = dp + np.swapaxes(dp, 0, 1) + dr ** 2 + np.swapaxes(dr, 0, 1) ** 2
        t3 = 2 * np.sum(np.abs(sym), axis=1)
        m = c[None, :] + prob.K1 * q - (t1 + t2 + t3)
        arg[i] = np.argmin(m, axis=0)
        marg[i] = np.min(m, axis=0)
    sub = S.worst("margin", marg, TOL_FLOAT, lambda a, k: f"lambda={_fmt_vec(vecs[arg[a, k]])}")
    return _combine(name, [sub], prob.h)


def check_explicit_1d(prob: Problem, spec: Optional[SampleSpec] = None) -> CheckRecord:
    """One-dimensional condition ``14 (r')^2 + b' <= (1 - delta) c + K1 a`` with ``a = q_1``, ``r = sqrt(a)``.

    Points where ``r'`` or ``b'`` is undefined (e.g. ``a = 0`` for a
    nonsmooth ``r``) are skipped and counted.
    """
    name = "explicit_1d"
    if prob.dim != 1 or set(prob.vectors) != {(1,), (-1,)}:
        return _na(name, "needs d = 1 and stencil {+1, -1}", prob.h)
    S = _Samples(prob, spec)
    a = prob.coeffs.q_of((1,))
    for t in S.times:
        if np.any(np.abs(S.val(a, t) - S.val(prob.coeffs.q_of((-1,)), t)) > TOL_FLOAT):
            return _na(name, "q_1 != q_-1", prob.h)
        if np.any(S.val(a, t) < -TOL_FLOAT):
            return _na(name, "q < 0", prob.h)
    _, b = limit_expressions(prob)
    dr = ex.differentiate(ex.call("sqrt", a), "x1")
    db = ex.differentiate(b[0], "x1")
    marg = np.empty((S.times.size, S.n))
    with np.errstate(all="ignore"):
        for i, t in enumerate(S.times):
            rp = S.val(dr, t, strict=False)
            bp = S.val(db, t, strict=False)
            m = (1 - prob.delta) * S.val(prob.coeffs.c, t) + prob.K1 * S.val(a, t) - 14 * rp ** 2 - bp
            marg[i] = np.where(np.isfinite(m), m, np.nan)
    skipped = int(np.sum(np.isnan(marg)))
    if skipped == marg.size:
        return _na(name, "derivatives undefined at every sample", prob.h)
    sub = S.worst("margin", marg, TOL_FLOAT)
    return _combine(name, [sub], prob.h, skipped=skipped)


def check_nondegenerate_shortcut(prob: Problem, spec: Optional[SampleSpec] = None) -> CheckRecord:
    """Symmetric stencil, ``q_lam >= kappa`` and ``D q_lam = D q_{-lam}``.

    A pass is a sufficient-condition verdict valid for small enough ``h``.
    """
    name = "nondegenerate_shortcut"
    if prob.kappa is None:
        return _na(name, "no kappa configured", prob.h)
    vecs = prob.vectors
    missing = [l for l in vecs if _neg(l) not in vecs]
    if missing:
        return _combine(name, [_Sub("set_symmetry", -math.inf, 0.0,
                                    witness=f"lambda={_fmt_vec(missing[0])} without its negative")], prob.h)
    S = _Samples(prob, spec)
    qmin = np.full((S.times.size, S.n), math.inf)
    qarg = np.zeros((S.times.size, S.n), dtype=int)
    dmax = np.zeros((S.times.size, S.n))
    darg = np.zeros((S.times.size, S.n), dtype=int)
    for it, t in enumerate(S.times):
        for j, l in enumerate(vecs):
            q = S.val(prob.coeffs.q_of(l), t) - prob.kappa
            better = q < qmin[it]
            qmin[it] = np.where(better, q, qmin[it])
            qarg[it] = np.where(better, j, qarg[it])
            for i in range(prob.dim):
                var = f"x{i + 1}"
                d = np.abs(S.val(ex.differentiate(prob.coeffs.q_of(l), var), t)
                           - S.val(ex.differentiate(prob.coeffs.q_of(_neg(l)), var), t))
                better = d > dmax[it]
                dmax[it] = np.where(better, d, dmax[it])
                darg[it] = np.where(better, j, darg[it])
    subs = [
        _Sub("set_symmetry", 0.0, 0.0),
        S.worst("q_minus_kappa", qmin, TOL_FLOAT, lambda a, k: f"lambda={_fmt_vec(vecs[qarg[a, k]])}"),
        S.worst("derivative_symmetry", -dmax, TOL_DERIV, lambda a, k: f"lambda={_fmt_vec(vecs[darg[a, k]])}"),
    ]
    return _combine(name, subs, prob.h)


CHECKS = {
    "positivity": check_positivity,
    "symmetry_S": check_symmetry_S,
    "drift_constancy": check_drift_constancy,
    "linearity_orthogonality": check_linearity_orthogonality,
    "quadratic_form": check_quadratic_form,
    "rough_condition": check_rough_condition,
    "explicit_1d": check_explicit_1d,
    "nondegenerate_shortcut": check_nondegenerate_shortcut,
}


@dataclass
class AssumptionReport:
    records: List[CheckRecord]
    warnings: List[str] = field(default_factory=list)

    @property
    def failed(self) -> List[CheckRecord]:
        return [r for r in self.records if r.failed]

    @property
    def ok(self) -> bool:
        return not self.failed

    def __getitem__(self, name: str) -> CheckRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_csv(self, target=None) -> str:
        d = max((len(r.x) for r in self.records if r.x), default=0)
        header = ["check", "h", "verdict", "margin", "tolerance", "t",
                  *[f"x{i + 1}" for i in range(d)], "witness", "note"]

        def rows():
            for r in self.records:
                x = list(r.x) if r.x else []
                x += [None] * (d - len(x))
                yield (r.name, r.h, r.verdict, r.margin, r.tolerance, r.t, *x, r.witness,
                       r.details.get("reason", ""))

        return write_csv(target, header, rows())

    def table(self) -> str:
        lines = [f"{'check':<26}{'h':>12}  {'verdict':<15}{'margin':>14}  where"]
        for r in self.records:
            where = ""
            if r.x is not None:
                where = f"t={r.t:.4g} x=({', '.join(f'{v:.4g}' for v in r.x)})"
            if r.witness:
                where += f" {r.witness}"
            if r.verdict == NA:
                where = r.details.get("reason", "")
            h = f"{r.h:.6g}" if r.h is not None else ""
            lines.append(f"{r.name:<26}{h:>12}  {r.verdict:<15}{r.margin:>14.6g}  {where}".rstrip())
        lines.extend(f"warning: {w}" for w in self.warnings)
        return "\n".join(lines)


def run_checks(prob: Problem, checks: Iterable[str] | str = "all", spec: Optional[SampleSpec] = None,
               h_sweep: bool = False) -> AssumptionReport:
    """Run the named checks (or all) at ``h``, or at ``h, h/2, h/4`` with ``h_sweep``."""
    names = list(CHECKS) if checks == "all" else list(checks)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check(s): {', '.join(unknown)}")
    hs = [prob.h / 2 ** j for j in range(3)] if h_sweep else [prob.h]
    records = []
    for h in hs:
        p = prob if h == prob.h else prob.with_h(h)
        records.extend(CHECKS[n](p, spec) for n in names)
    warnings = []
    if prob.m >= 1 and any(ex.uses_nonsmooth(e) for e in prob.coeffs.all_expressions()):
        warnings.append(f"nonsmooth primitives present while m = {prob.m} derivatives are declared")
    return AssumptionReport(records, warnings)
