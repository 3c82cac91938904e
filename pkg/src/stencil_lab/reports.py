"""Result records shared by the solvers and the CLI, and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = ["fmt", "write_csv", "fit_order", "ConvergenceReport"]


def fmt(value) -> str:
    """CSV cell text; floats keep 17 significant digits so runs are reproducible."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(target, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write rows to ``target`` (path, stream or None) and return the text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if target is None:
        return text
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", newline="") as fh:
            fh.write(text)
    return text


def fit_order(hs: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    x = np.log(np.asarray(hs, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


@dataclass
class ConvergenceReport:
    """Sup errors over a sequence of spacings with the fitted order.

    ``order`` is ``inf`` when every error vanishes (the scheme is exact on the
    data) and ``nan`` when the sequence is not monotone; ``diagnostic`` then
    says why.
    """

    h: list
    errors: list
    order: float
    k: Optional[int] = None
    diagnostic: str = ""
    extra: dict = field(default_factory=dict)

    HEADER = ("k", "h", "sup_error", "fitted_order")

    def rows(self):
        for h, e in zip(self.h, self.errors):
            yield (self.k, h, e, self.order)

    def to_csv(self, target=None) -> str:
        return write_csv(target, self.HEADER, self.rows())

    @property
    def exact(self) -> bool:
        return math.isinf(self.order) and self.order > 0
