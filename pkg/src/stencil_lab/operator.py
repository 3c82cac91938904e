"""The discrete operators ``L0_h``, ``L_h`` and their continuum limit.

For a stencil ``Lambda`` and coefficients ``q_lam, p_lam, c``::

    L0_h u(x) = h^-2 * sum_lam chi_lam(t, x) * (u(x + h*lam) - u(x)),
    chi_lam   = q_lam + h * p_lam,
    L_h u     = L0_h u - c * u.

As ``h -> 0`` (with ``q_lam = q_-lam``) ``L_h`` tends to
``a_ij D_i D_j + b_i D_i - c`` with ``a_ij = 1/2 sum q_lam lam_i lam_j`` and
``b_i = sum p_lam lam_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from . import expr as ex
from .expr import Expr, as_expr, evaluate, evaluate_array
from .lattice import Domain, GridFunction, Stencil, _as_vector, interior_slices, sample
from .reports import ConvergenceReport, fit_order

__all__ = [
    "CoefficientSet", "Problem", "DiscreteOperator",
    "chi", "apply_L0", "apply_L", "limit_coefficients", "limit_expressions",
    "continuum_apply", "consistency_error", "add_theta", "rescale",
]


def _expr_map(m) -> dict:
    if not m:
        return {}
    return {_as_vector(k): as_expr(v) for k, v in dict(m).items()}


@dataclass(frozen=True)
class CoefficientSet:
    """Expressions for ``q_lam``, ``p_lam``, ``c``, ``f`` and ``g``; missing entries are zero."""

    q: Mapping = field(default_factory=dict)
    p: Mapping = field(default_factory=dict)
    c: Expr = ex.ONE
    f: Expr = ex.ZERO
    g: Expr = ex.ZERO

    def __post_init__(self):
        object.__setattr__(self, "q", _expr_map(self.q))
        object.__setattr__(self, "p", _expr_map(self.p))
        for name in ("c", "f", "g"):
            object.__setattr__(self, name, as_expr(getattr(self, name)))

    def q_of(self, lam) -> Expr:
        return self.q.get(_as_vector(lam), ex.ZERO)

    def p_of(self, lam) -> Expr:
        return self.p.get(_as_vector(lam), ex.ZERO)

    def all_expressions(self):
        yield from self.q.values()
        yield from self.p.values()
        yield self.c
        yield self.f
        yield self.g


@dataclass(frozen=True)
class Problem:
    """Domain, stencil, coefficients and the constants the estimates refer to.

    ``theta`` records the artificial-diffusion shift already folded into the
    ``p`` expressions (see :func:`add_theta`); ``kappa`` is the lower bound on
    ``q`` used by the nondegeneracy check.
    """

    domain: Domain
    stencil: Stencil
    coeffs: CoefficientSet
    c0: float = 1.0
    delta: float = 0.1
    K1: float = 1.0
    m: int = 1
    T: float = 1.0
    theta: float = 0.0
    kappa: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.stencil.dim != self.domain.dim:
            raise ValueError("stencil and domain dimensions differ")
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0,1]")
        if not self.K1 >= 1:
            raise ValueError("K1 must be at least 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError("kappa must be positive")
        vecs = set(self.stencil.vectors)
        for name, table in (("q", self.coeffs.q), ("p", self.coeffs.p)):
            for lam in table:
                if lam not in vecs:
                    raise ValueError(f"{name} given for {lam}, which is not a stencil vector")
        for e in self.coeffs.all_expressions():
            if ex.dimension(e) > self.domain.dim:
                raise ValueError(f"expression '{ex.render(e)}' uses a coordinate beyond dimension {self.domain.dim}")

    @property
    def h(self) -> float:
        return self.domain.h

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def vectors(self) -> tuple:
        return self.stencil.vectors

    def with_h(self, h: float) -> "Problem":
        return replace(self, domain=self.domain.with_h(h))

    def with_coeffs(self, **changes) -> "Problem":
        return replace(self, coeffs=replace(self.coeffs, **changes))

    def replace(self, **changes) -> "Problem":
        return replace(self, **changes)

    def time_dependent(self, include_f: bool = True) -> bool:
        exprs = [*self.coeffs.q.values(), *self.coeffs.p.values(), self.coeffs.c]
        if include_f:
            exprs.append(self.coeffs.f)
        return any("t" in ex.variables(e) for e in exprs)


def chi(prob: Problem, lam, t: float, x: Sequence[float]) -> float:
    """``chi_lam = q_lam + h p_lam`` at one point."""
    lam = _as_vector(lam)
    if lam not in prob.vectors:
        raise ValueError(f"{lam} is not a stencil vector")
    return evaluate(prob.coeffs.q_of(lam), t, x) + prob.h * evaluate(prob.coeffs.p_of(lam), t, x)


def _shifted_region(values: np.ndarray, dom: Domain, region: tuple, lam: tuple) -> np.ndarray:
    if dom.periodic:
        return np.roll(values, tuple(-c for c in lam), axis=tuple(range(dom.dim)))
    return values[tuple(slice(s.start + c, s.stop + c) for s, c in zip(region, lam))]


class DiscreteOperator:
    """``L_h`` with coefficients tabulated on the grid at a fixed time ``t``.

    Arrays are evaluated once at construction; rebuild for another ``t`` when
    the coefficients depend on time.
    """

    def __init__(self, prob: Problem, t: float = 0.0, points=None):
        self.prob = prob
        self.t = t
        dom = prob.domain
        pts = dom.points() if points is None else points
        h = dom.h
        self.vectors = prob.vectors
        self.region = interior_slices(dom, self.vectors)
        self.chi = [
            np.broadcast_to(evaluate_array(prob.coeffs.q_of(lam), t, pts)
                            + h * evaluate_array(prob.coeffs.p_of(lam), t, pts), dom.shape)
            for lam in self.vectors
        ]
        self.c = np.broadcast_to(evaluate_array(prob.coeffs.c, t, pts), dom.shape)

    @property
    def weights(self) -> list:
        """Off-center weights ``chi_lam / h^2``."""
        return [x / self.prob.h ** 2 for x in self.chi]

    def diagonal(self) -> np.ndarray:
        """``c + h^-2 sum chi_lam`` at every point."""
        return self.c + sum(self.chi) / self.prob.h ** 2

    def L0_region(self, values: np.ndarray) -> np.ndarray:
        """``L0_h`` of full-grid ``values``, on the interior region only."""
        dom = self.prob.domain
        region = self.region
        center = values[region]
        acc = np.zeros(center.shape)
        for lam, chi_lam in zip(self.vectors, self.chi):
            acc += chi_lam[region] * (_shifted_region(values, dom, region, lam) - center)
        return acc / dom.h ** 2

    def L_region(self, values: np.ndarray) -> np.ndarray:
        return self.L0_region(values) - self.c[self.region] * values[self.region]

    def _to_grid(self, region_values: np.ndarray, t) -> GridFunction:
        dom = self.prob.domain
        out = np.zeros(dom.shape)
        out[self.region] = region_values
        mask = None if dom.periodic else dom.interior_mask(self.vectors)
        return GridFunction(dom, out, t, mask)

    def apply_L0(self, u: GridFunction) -> GridFunction:
        return self._to_grid(self.L0_region(u.values), u.time)

    def apply_L(self, u: GridFunction) -> GridFunction:
        return self._to_grid(self.L_region(u.values), u.time)


def apply_L0(prob: Problem, u: GridFunction, t: float = 0.0) -> GridFunction:
    """``L0_h u`` on the interior (the whole torus when periodic)."""
    if u.domain != prob.domain:
        raise ValueError("grid function is not on the problem domain")
    return DiscreteOperator(prob, t).apply_L0(u)


def apply_L(prob: Problem, u: GridFunction, t: float = 0.0) -> GridFunction:
    """``L_h u = L0_h u - c u`` on the interior."""
    if u.domain != prob.domain:
        raise ValueError("grid function is not on the problem domain")
    return DiscreteOperator(prob, t).apply_L(u)


def limit_expressions(prob: Problem):
    """Symbolic continuum coefficients ``(a, b)``: a d-by-d nested list and a d-list."""
    d = prob.dim
    a = [[ex.ZERO] * d for _ in range(d)]
    b = [ex.ZERO] * d
    for lam in prob.vectors:
        q, p = prob.coeffs.q_of(lam), prob.coeffs.p_of(lam)
        for i in range(d):
            if lam[i]:
                b[i] = b[i] + p * float(lam[i])
            for j in range(d):
                if lam[i] * lam[j]:
                    a[i][j] = a[i][j] + q * (0.5 * lam[i] * lam[j])
    return a, b


def limit_coefficients(prob: Problem, t: float, x: Sequence[float]):
    """Numeric ``a`` (d x d) and ``b`` (d) of the limit operator at ``(t, x)``."""
    d = prob.dim
    a = np.zeros((d, d))
    b = np.zeros(d)
    for lam in prob.vectors:
        q = evaluate(prob.coeffs.q_of(lam), t, x)
        p = evaluate(prob.coeffs.p_of(lam), t, x)
        v = np.asarray(lam, dtype=float)
        a += 0.5 * q * np.outer(v, v)
        b += p * v
    return a, b


def continuum_apply(prob: Problem, phi) -> Expr:
    """Expression for ``a_ij D_i D_j phi + b_i D_i phi - c phi``."""
    phi = as_expr(phi)
    a, b = limit_expressions(prob)
    d = prob.dim
    grads = [ex.differentiate(phi, f"x{i + 1}") for i in range(d)]
    out = -(prob.coeffs.c * phi)
    for i in range(d):
        out = out + b[i] * grads[i]
        for j in range(d):
            out = out + a[i][j] * ex.differentiate(grads[i], f"x{j + 1}")
    return out


def consistency_error(prob: Problem, phi, h_list: Sequence[float], t: float = 0.0,
                      zero_tol: float = 1e-12) -> ConvergenceReport:
    """Sup over interior points of ``|L_h phi - L phi|`` for each ``h``, with the fitted order."""
    phi = as_expr(phi)
    if ex.uses_nonsmooth(phi):
        raise ValueError("phi must be smooth (no abs/min/max/pos/neg)")
    target = continuum_apply(prob, phi)
    hs = [float(h) for h in h_list]
    errors = []
    for h in hs:
        p = prob.with_h(h)
        u = sample(phi, p.domain, t)
        lh = apply_L(p, u, t)
        exact = sample(target, p.domain, t)
        diff = lh - exact
        errors.append(float(np.max(np.abs(diff.values[diff.defined]))))
    scale = max(1.0, max(abs(v) for v in errors))
    if all(e <= zero_tol * scale for e in errors):
        return ConvergenceReport(hs, errors, math.inf, diagnostic="exact: all errors vanish")
    order_by_h = sorted(zip(hs, errors), reverse=True)
    errs_desc = [e for _, e in order_by_h]
    if any(b >= a for a, b in zip(errs_desc, errs_desc[1:])):
        return ConvergenceReport(hs, errors, math.nan,
                                 diagnostic="non-monotone error sequence; order not fitted")
    return ConvergenceReport(hs, errors, fit_order(hs, errors))


def add_theta(prob: Problem, theta: float) -> Problem:
    """Artificial diffusion: ``p_lam -> p_lam + theta`` for every ``lam`` of a symmetric stencil.

    The limit operator is unchanged because the added drift cancels in pairs.
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if not prob.stencil.is_symmetric():
        raise ValueError("add_theta needs a symmetric stencil")
    if theta == 0:
        return prob
    p = {lam: prob.coeffs.p_of(lam) + theta for lam in prob.vectors}
    return replace(prob.with_coeffs(p=p), theta=prob.theta + theta)


def rescale(prob: Problem, kappa: float, keep_K1: bool = False) -> Problem:
    """Dilate space by ``kappa``: ``x -> kappa x``, ``h -> kappa h``.

    Coefficients become ``kappa^2 q(x/kappa)``, ``kappa p(x/kappa)``,
    ``c(x/kappa)`` (likewise ``f`` and ``g``) so that the new operator applied
    to ``u(x/kappa)`` reproduces ``(L_h u)(x/kappa)``.  ``K1`` and ``kappa``
    (the lower bound on ``q``) are rescaled to keep every condition check
    comparable; pass ``keep_K1=True`` when only the operator matters and the
    rescaled ``K1`` would drop below 1.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    K1 = prob.K1 if keep_K1 else prob.K1 / kappa ** 2
    if K1 < 1:
        raise ValueError("rescaling would push K1 below 1; use kappa <= 1 or keep_K1=True")
    sub = {f"x{i + 1}": ex.Var(f"x{i + 1}") / kappa for i in range(prob.dim)}

    def s(e):
        return ex.substitute(e, sub)

    c = prob.coeffs
    coeffs = CoefficientSet(
        q={lam: s(e) * kappa ** 2 for lam, e in c.q.items()},
        p={lam: s(e) * kappa for lam, e in c.p.items()},
        c=s(c.c), f=s(c.f), g=s(c.g),
    )
    return replace(
        prob, domain=prob.domain.scaled(kappa), coeffs=coeffs,
        K1=K1,
        kappa=None if prob.kappa is None else prob.kappa * kappa ** 2,
        theta=prob.theta * kappa,
    )
