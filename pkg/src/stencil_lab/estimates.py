"""Empirical h-uniformity of the gradient bound ``|u| + tau0 |Du| + U <= N (F1 + boundary)``.

The constant ``N`` is never computed; the study reports the ratio ``R(h)``
of the left side to ``F1 + boundary term`` so that boundedness across a
sequence of spacings can be observed directly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .elliptic import solve_elliptic
from .expr import evaluate_array
from .lattice import Domain, sample
from .operator import DiscreteOperator, Problem
from .parabolic import _step_plan, euler_steps, stable_dt
from .reports import write_csv
from .richardson import thread_count

__all__ = ["GradientStudy", "StudyRow", "compute_F1", "gradient_bound_study", "functional_terms"]


def compute_F1(prob: Problem, t_samples: int = 17, points=None) -> float:
    """Sampled ``sup (|f| + |grad f|)`` over the grid (or ``points``) and time."""
    f = prob.coeffs.f
    grads = [ex.differentiate(f, f"x{i + 1}") for i in range(prob.dim)]
    pts = prob.domain.points() if points is None else points
    times = np.linspace(0.0, prob.T, t_samples) if "t" in ex.variables(f) else [0.0]
    best = 0.0
    for t in times:
        val = np.abs(evaluate_array(f, t, pts))
        g2 = sum(evaluate_array(g, t, pts) ** 2 for g in grads)
        best = max(best, float(np.max(val + np.sqrt(g2))))
    return best


class _Embedding:
    """Full-grid values placed inside a frame wide enough for every stencil shift.

    On a box the frame is filled with ``g`` (the Dirichlet data extended
    outward); a torus needs no frame.
    """

    def __init__(self, prob: Problem):
        dom = prob.domain
        self.dom = dom
        self.prob = prob
        vecs = list(prob.vectors) + [tuple(1 if j == i else 0 for j in range(dom.dim)) for i in range(dom.dim)]
        self.width = 0 if dom.periodic else max(max(abs(c) for c in v) for v in vecs)
        if dom.periodic:
            self.frame = None
            self.inner = tuple(slice(None) for _ in range(dom.dim))
        else:
            big = dom.padded(self.width)
            self.frame = np.array(sample(prob.coeffs.g, big, 0.0).values)
            self.inner = tuple(slice(self.width, self.width + n) for n in dom.shape)

    def embed(self, values: np.ndarray) -> np.ndarray:
        if self.frame is None:
            return values
        out = self.frame.copy()
        out[self.inner] = values
        return out

    def shifted(self, big: np.ndarray, lam) -> np.ndarray:
        if self.frame is None:
            return np.roll(big, tuple(-c for c in lam), axis=tuple(range(self.dom.dim)))
        return big[tuple(slice(s.start + c, s.stop + c) for s, c in zip(self.inner, lam))]


def functional_terms(prob: Problem, values: np.ndarray, emb: Optional[_Embedding] = None):
    """Arrays ``|u|``, ``tau0 |Du|`` and ``U`` on the grid of ``prob``."""
    emb = emb or _Embedding(prob)
    big = emb.embed(values)
    h = prob.h
    center = values
    U2 = np.zeros(center.shape)
    for lam, w in zip(prob.stencil.vectors, prob.stencil.tau):
        if w:
            U2 += (w * (emb.shifted(big, lam) - center) / h) ** 2
    tau0 = prob.stencil.tau0
    if tau0:
        d = prob.dim
        g2 = np.zeros(center.shape)
        for i in range(d):
            e = tuple(1 if j == i else 0 for j in range(d))
            m = tuple(-c for c in e)
            g2 += ((emb.shifted(big, e) - emb.shifted(big, m)) / (2 * h)) ** 2
        du = tau0 * np.sqrt(g2)
    else:
        du = np.zeros(center.shape)
    return np.abs(center), du, np.sqrt(U2)


@dataclass
class StudyRow:
    h: float
    sup_u: float
    sup_tau0_Du: float
    sup_U: float
    F1: float
    boundary: float
    R: float
    sup_total: float


@dataclass
class GradientStudy:
    mode: str
    rows: list
    stencil_norm2: float
    sup_Dc: float
    extra: dict = field(default_factory=dict)

    HEADER = ("h", "sup_u", "sup_tau0_Du", "sup_U", "F1", "boundary", "R")

    @property
    def h_list(self):
        return [r.h for r in self.rows]

    @property
    def ratios(self):
        return [r.R for r in self.rows]

    @property
    def spread(self) -> float:
        """``max R / min R`` (1 when every ratio is 0)."""
        rs = self.ratios
        if max(rs) == 0:
            return 1.0
        return max(rs) / min(rs) if min(rs) > 0 else math.inf

    def to_csv(self, target=None) -> str:
        return write_csv(target, self.HEADER,
                         ((r.h, r.sup_u, r.sup_tau0_Du, r.sup_U, r.F1, r.boundary, r.R) for r in self.rows))


class _Accumulator:
    def __init__(self, prob: Problem):
        self.prob = prob
        self.emb = _Embedding(prob)
        dom = prob.domain
        op = DiscreteOperator(prob, 0.0)
        inner = np.zeros(dom.shape, dtype=bool)
        inner[op.region] = True
        self.layer = ~inner
        self.sups = np.zeros(3)
        self.total = 0.0
        self.boundary = 0.0

    def add(self, values: np.ndarray, initial: bool):
        a, d, u = functional_terms(self.prob, values, self.emb)
        s = a + d + u
        self.sups = np.maximum(self.sups, [a.max(), d.max(), u.max()])
        self.total = max(self.total, float(s.max()))
        if initial:
            self.boundary = max(self.boundary, float(s.max()))
        elif self.layer.any():
            self.boundary = max(self.boundary, float(s[self.layer].max()))


def _study_one(prob: Problem, mode: str, tol: float) -> StudyRow:
    acc = _Accumulator(prob)
    if mode == "parabolic":
        g = np.array(sample(prob.coeffs.g, prob.domain, 0.0).values)
        acc.add(g, initial=True)
        steps = _step_plan(prob.T, stable_dt(prob))
        for _, _, u in euler_steps(prob, g, steps):
            acc.add(u, initial=False)
    elif mode == "elliptic":
        u = solve_elliptic(prob, tol=tol)
        acc.add(np.array(u.values), initial=False)
    else:
        raise ValueError(f"mode must be 'parabolic' or 'elliptic', got {mode!r}")
    F1 = compute_F1(prob)
    denom = F1 + acc.boundary
    R = 0.0 if acc.total == 0 else (acc.total / denom if denom > 0 else math.inf)
    return StudyRow(prob.h, *map(float, acc.sups), F1, acc.boundary, R, acc.total)


def _sup_Dc(prob: Problem) -> float:
    pts = prob.domain.points()
    g2 = sum(evaluate_array(ex.differentiate(prob.coeffs.c, f"x{i + 1}"), 0.0, pts) ** 2 for i in range(prob.dim))
    return float(np.max(np.sqrt(np.broadcast_to(g2, prob.domain.shape))))


def gradient_bound_study(prob: Problem, h_list: Sequence[float], mode: str = "parabolic",
                         tol: float = 1e-10) -> GradientStudy:
    """Solve at each spacing (concurrently) and tabulate ``R(h)``."""
    if mode not in ("parabolic", "elliptic"):
        raise ValueError(f"mode must be 'parabolic' or 'elliptic', got {mode!r}")
    hs = [float(h) for h in h_list]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("h_list must be strictly decreasing")
    probs = [prob.with_h(h) for h in hs]

    def run(p):
        try:
            return _study_one(p, mode, tol)
        except Exception as exc:
            raise RuntimeError(f"h={p.h:g}: {exc}") from exc

    with ThreadPoolExecutor(max_workers=min(thread_count(), len(probs))) as pool:
        rows = list(pool.map(run, probs))
    for r in rows:
        if not all(math.isfinite(v) for v in (r.sup_u, r.sup_tau0_Du, r.sup_U, r.F1, r.boundary)):
            raise ArithmeticError(f"non-finite study entry at h={r.h:g}")
    return GradientStudy(mode, rows, prob.stencil.norm2(), _sup_Dc(prob))
