"""Richardson extrapolation across the spacings ``h, h/2, ..., h/2^k``.

The weights ``b`` solve ``b V = e_1`` with ``V[i, j] = 2^(-i j)``, so
``sum_j b_j u_{h/2^j}`` cancels the ``h, h^2, ..., h^k`` terms of an error
expansion in powers of ``h``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .elliptic import solve_elliptic
from .lattice import GridFunction
from .operator import Problem
from .reports import fit_order

__all__ = ["ExtrapolationWeights", "LevelError", "vandermonde_weights", "extrapolate",
           "combine_levels", "observed_order", "thread_count"]

MAX_K = 12


def thread_count() -> int:
    """Worker cap from ``STENCIL_LAB_THREADS`` (default: CPU count)."""
    raw = os.environ.get("STENCIL_LAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"STENCIL_LAB_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExtrapolationWeights:
    k: int
    b: tuple

    def __post_init__(self):
        if len(self.b) != self.k + 1:
            raise ValueError("need k+1 weights")


def _solve_dense(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=float)
    x = np.array(rhs, dtype=float)
    n = a.shape[0]
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if a[piv, col] == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            x[[col, piv]] = x[[piv, col]]
        for row in range(col + 1, n):
            m = a[row, col] / a[col, col]
            a[row, col:] -= m * a[col, col:]
            x[row] -= m * x[col]
    for row in range(n - 1, -1, -1):
        x[row] = (x[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


def vandermonde_weights(k: int) -> ExtrapolationWeights:
    """Weights ``b`` with ``b V = (1, 0, ..., 0)``, ``V[i, j] = 2^(-i j)``."""
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= MAX_K:
        raise ValueError(f"k must be an integer in [0, {MAX_K}], got {k!r}")
    i = np.arange(k + 1)
    V = 2.0 ** (-np.outer(i, i))
    e1 = np.zeros(k + 1)
    e1[0] = 1.0
    b = _solve_dense(V.T, e1)
    resid = float(np.max(np.abs(b @ V - e1)))
    if resid > 1e-10:
        raise ArithmeticError(f"weight residual {resid:.2e} exceeds 1e-10 at k={k}")
    return ExtrapolationWeights(int(k), tuple(float(v) for v in b))


class LevelError(RuntimeError):
    """A level solve failed; ``level`` and ``h`` say which."""

    def __init__(self, level: int, h: float, cause: BaseException):
        super().__init__(f"level {level} (h={h:g}): {cause}")
        self.level = level
        self.h = h
        self.cause = cause


def _coarse_view(u: GridFunction, factor: int) -> np.ndarray:
    return u.values[tuple(slice(None, None, factor) for _ in range(u.domain.dim))]


def combine_levels(levels: Sequence[GridFunction], weights: ExtrapolationWeights) -> np.ndarray:
    """``sum_j b_j u_j`` at the coarse lattice points; ``levels[j]`` has spacing ``h / 2^j``."""
    if len(levels) != weights.k + 1:
        raise ValueError("one level per weight is required")
    out = np.zeros(levels[0].domain.shape)
    for j, (u, b) in enumerate(zip(levels, weights.b)):
        out += b * _coarse_view(u, 2 ** j)
    return out


def extrapolate(prob: Problem, k: int, tol: float = 1e-10, max_iter: int = 5_000_000,
                return_levels: bool = False):
    """Extrapolated elliptic solution on the lattice of ``prob.h``.

    Level ``j`` is solved at ``h / 2^j`` with residual tolerance
    ``tol * 4^-k``; levels run concurrently.
    """
    w = vandermonde_weights(k)
    level_tol = tol * 4.0 ** (-k)
    probs = [prob.with_h(prob.h / 2 ** j) for j in range(k + 1)]

    def run(j):
        try:
            return solve_elliptic(probs[j], tol=level_tol, max_iter=max_iter)
        except Exception as exc:  # tag the failing level
            raise LevelError(j, probs[j].h, exc) from exc

    with ThreadPoolExecutor(max_workers=min(thread_count(), k + 1)) as pool:
        levels = list(pool.map(run, range(k + 1)))
    out = GridFunction(prob.domain, combine_levels(levels, w))
    return (out, levels) if return_levels else out


def observed_order(errors) -> float:
    """Fitted slope of ``log e`` against ``log h``; ``inf`` when every error is zero.

    ``errors`` is a sequence of ``(h, e)`` pairs, at least three.
    """
    pairs = [(float(h), float(e)) for h, e in errors]
    if len(pairs) < 3:
        raise ValueError("observed order needs at least 3 levels")
    hs, es = zip(*pairs)
    if any(e < 0 or not math.isfinite(e) for e in es):
        raise ValueError("errors must be finite and nonnegative")
    if all(e == 0 for e in es):
        return math.inf
    if any(e == 0 for e in es):
        raise ValueError("some but not all errors are zero; the order is undefined")
    return fit_order(hs, es)
