"""Grid functions on a bounded lattice and the shift/difference operators.

A :class:`Domain` is either a box whose outer layer carries Dirichlet data or
a periodic torus.  Lattice points are ``lower + h*i``; a box includes both
end points, a torus excludes ``upper`` (it is identified with ``lower``).

On a box, an operator that looks at ``x + h*lam`` is only defined where that
point stays inside.  Such results keep the full array shape and carry a
boolean ``mask`` of defined points; values outside the mask are zero and
ignored by the reductions here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .expr import Expr, as_expr, evaluate_array

__all__ = [
    "Stencil", "Domain", "GridFunction", "ShiftError",
    "sample", "shift", "delta", "delta2", "central_gradient", "sup_norm",
    "gradient_functional_U", "interior_slices",
]

BOX = "box"
PERIODIC = "periodic"


class ShiftError(ValueError):
    """A shift leaves a box domain and the caller asked for the full extent."""


def _as_vector(lam) -> tuple:
    if np.ndim(lam) == 0:
        lam = (lam,)
    out = []
    for c in lam:
        if float(c) != int(c):
            raise ValueError(f"stencil vector {tuple(lam)} must have integer components")
        out.append(int(c))
    return tuple(out)


@dataclass(frozen=True)
class Stencil:
    """The shift set with per-direction weights ``tau`` and the gradient weight ``tau0``."""

    vectors: tuple
    tau: tuple = None
    tau0: float = 0.0

    def __post_init__(self):
        vectors = tuple(_as_vector(v) for v in self.vectors)
        if not vectors:
            raise ValueError("stencil needs at least one vector")
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise ValueError("stencil vectors have inconsistent dimensions")
        for v in vectors:
            if not any(v):
                raise ValueError("zero vector in stencil (0 ∉ Λ₁ is required)")
        if len(set(vectors)) != len(vectors):
            raise ValueError("stencil vectors must be pairwise distinct")
        tau = self.tau
        if tau is None:
            tau = (1.0,) * len(vectors)
        elif isinstance(tau, Mapping):
            tau = tuple(float(tau.get(v, 1.0)) for v in vectors)
        else:
            tau = tuple(float(x) for x in tau)
        if len(tau) != len(vectors):
            raise ValueError("one tau weight per stencil vector is required")
        for w in (*tau, self.tau0):
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"tau weight {w} outside [0,1]")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "tau0", float(self.tau0))

    @property
    def dim(self) -> int:
        return len(self.vectors[0])

    def __len__(self):
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    def tau_of(self, lam) -> float:
        return self.tau[self.vectors.index(_as_vector(lam))]

    def is_symmetric(self) -> bool:
        """Whether the vector set equals its negation."""
        s = set(self.vectors)
        return all(tuple(-c for c in v) in s for v in self.vectors)

    def norm2(self) -> float:
        """Sum of ``|tau_lam * lam|^2`` over the stencil."""
        return float(sum(w * w * sum(c * c for c in v) for v, w in zip(self.vectors, self.tau)))


@dataclass(frozen=True)
class Domain:
    kind: str
    lower: tuple
    upper: tuple
    h: float

    def __post_init__(self):
        if self.kind not in (BOX, PERIODIC):
            raise ValueError(f"domain kind must be 'box' or 'periodic', got {self.kind!r}")
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper):
            raise ValueError("lower and upper corners differ in dimension")
        h = float(self.h)
        if not h > 0:
            raise ValueError("spacing h must be positive")
        counts = []
        for lo, hi in zip(lower, upper):
            if not hi > lo:
                raise ValueError("upper corner must exceed lower corner")
            r = (hi - lo) / h
            n = round(r)
            if abs(r - n) > 1e-9 * max(1.0, r):
                raise ValueError(f"extent {hi - lo} is not an integer multiple of h={h}")
            counts.append(int(n))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "_cells", tuple(counts))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def periodic(self) -> bool:
        return self.kind == PERIODIC

    @property
    def shape(self) -> tuple:
        if self.periodic:
            return self._cells
        return tuple(n + 1 for n in self._cells)

    def axes(self) -> list:
        return [lo + self.h * np.arange(n) for lo, n in zip(self.lower, self.shape)]

    def points(self) -> list:
        """Coordinate arrays, one per dimension, each of ``shape``."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def with_h(self, h: float) -> "Domain":
        return Domain(self.kind, self.lower, self.upper, h)

    def scaled(self, kappa: float) -> "Domain":
        return Domain(self.kind, tuple(kappa * v for v in self.lower),
                      tuple(kappa * v for v in self.upper), kappa * self.h)

    def interior_mask(self, vectors: Iterable) -> np.ndarray:
        """Points ``x`` with ``x + h*lam`` inside for every ``lam`` (all points if periodic)."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[interior_slices(self, vectors)] = True
        return mask

    def padded(self, width: int) -> "Domain":
        """Box grown by ``width`` lattice layers on every side."""
        if self.periodic:
            return self
        return Domain(BOX, tuple(v - width * self.h for v in self.lower),
                      tuple(v + width * self.h for v in self.upper), self.h)


def interior_slices(dom: Domain, vectors: Iterable) -> tuple:
    """Index slices of the rectangular set of points whose shifts stay inside."""
    if dom.periodic:
        return tuple(slice(None) for _ in range(dom.dim))
    vectors = [_as_vector(v) for v in vectors]
    out = []
    for i, n in enumerate(dom.shape):
        lo = max([0] + [-v[i] for v in vectors])
        hi = n - max([0] + [v[i] for v in vectors])
        out.append(slice(lo, max(lo, hi)))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values on the lattice of ``domain`` (immutable)."""

    domain: Domain
    values: np.ndarray
    time: Optional[float] = None
    mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.domain.shape:
            raise ValueError(f"values of shape {values.shape} do not match domain shape {self.domain.shape}")
        mask = self.mask
        if mask is not None:
            mask = np.array(mask, dtype=bool)
            if mask.shape != values.shape:
                raise ValueError("mask shape mismatch")
            if mask.all():
                mask = None
            else:
                values[~mask] = 0.0
                mask.flags.writeable = False
        check = values if mask is None else values[mask]
        if not np.all(np.isfinite(check)):
            raise ValueError("grid function values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def defined(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.domain.shape, dtype=bool)
        return self.mask

    def restrict(self, mask) -> "GridFunction":
        m = self.defined & np.asarray(mask, dtype=bool)
        return GridFunction(self.domain, self.values, self.time, m)

    def _combine(self, other, fn):
        if isinstance(other, GridFunction):
            if other.domain != self.domain:
                raise ValueError("grid functions live on different domains")
            mask = self.defined & other.defined
            return GridFunction(self.domain, fn(self.values, other.values), self.time, mask)
        return GridFunction(self.domain, fn(self.values, float(other)), self.time, self.mask)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._combine(other, np.divide)

    def __neg__(self):
        return GridFunction(self.domain, -self.values, self.time, self.mask)

    def __abs__(self):
        return GridFunction(self.domain, np.abs(self.values), self.time, self.mask)


def sample(e, dom: Domain, t: float = 0.0) -> GridFunction:
    """Evaluate an expression at every lattice point (domain errors propagate)."""
    e = as_expr(e)
    values = evaluate_array(e, t, dom.points())
    return GridFunction(dom, values, t)


def _shifted_values(u: GridFunction, lam: tuple):
    """Values ``u(x + h*lam)`` and the mask where they are defined."""
    dom = u.domain
    if dom.periodic:
        axes = tuple(range(dom.dim))
        vals = np.roll(u.values, tuple(-c for c in lam), axis=axes)
        mask = None if u.mask is None else np.roll(u.mask, tuple(-c for c in lam), axis=axes)
        return vals, mask
    src, dst = [], []
    for c, n in zip(lam, dom.shape):
        if c >= 0:
            dst.append(slice(0, max(0, n - c)))
            src.append(slice(min(c, n), n))
        else:
            dst.append(slice(min(-c, n), n))
            src.append(slice(0, max(0, n + c)))
    vals = np.zeros(dom.shape)
    mask = np.zeros(dom.shape, dtype=bool)
    vals[tuple(dst)] = u.values[tuple(src)]
    mask[tuple(dst)] = u.defined[tuple(src)]
    return vals, mask


def shift(u: GridFunction, lam, full: bool = False) -> GridFunction:
    """The translation ``T_lam u(x) = u(x + h*lam)``.

    On a box the result is defined only where ``x + h*lam`` stays inside;
    with ``full=True`` leaving the box is an error instead.
    """
    lam = _as_vector(lam)
    if len(lam) != u.domain.dim:
        raise ValueError("shift vector dimension does not match the domain")
    vals, mask = _shifted_values(u, lam)
    if full and mask is not None and not mask.all():
        raise ShiftError(f"shift by {lam} leaves the box domain")
    return GridFunction(u.domain, vals, u.time, mask)


def delta(u: GridFunction, lam) -> GridFunction:
    """Forward difference ``(u(x + h*lam) - u(x)) / h``."""
    return (shift(u, lam) - u) / u.domain.h


def delta2(u: GridFunction, lam) -> GridFunction:
    """Second symmetric difference ``(u(x+h*lam) - 2u(x) + u(x-h*lam)) / h^2``."""
    lam = _as_vector(lam)
    minus = tuple(-c for c in lam)
    return (shift(u, lam) - 2.0 * u + shift(u, minus)) / u.domain.h ** 2


def central_gradient(u: GridFunction) -> list:
    """Central differences ``(u(x+h e_i) - u(x-h e_i)) / 2h`` for each axis."""
    d = u.domain.dim
    out = []
    for i in range(d):
        e = tuple(1 if j == i else 0 for j in range(d))
        m = tuple(-c for c in e)
        out.append((shift(u, e) - shift(u, m)) / (2.0 * u.domain.h))
    return out


def sup_norm(u: GridFunction) -> float:
    """Largest ``|u|`` over the points where ``u`` is defined (0 if none)."""
    vals = u.values if u.mask is None else u.values[u.mask]
    return float(np.max(np.abs(vals))) if vals.size else 0.0


def gradient_functional_U(u: GridFunction, stencil: Stencil) -> GridFunction:
    """``U = (sum_lam |tau_lam * delta_lam u|^2)^(1/2)``."""
    total = None
    for lam, w in zip(stencil.vectors, stencil.tau):
        term = delta(u, lam) * w
        term = term * term
        total = term if total is None else total + term
    return GridFunction(u.domain, np.sqrt(total.values), u.time, total.mask)


def points_of(dom: Domain, index) -> tuple:
    return tuple(lo + dom.h * i for lo, i in zip(dom.lower, index))
