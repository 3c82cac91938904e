"""Built-in problems, selectable by name from the CLI and used by the test suite."""

from __future__ import annotations

import math
from typing import Callable, Dict, Optional

from .expr import parse
from .lattice import Domain, Stencil
from .operator import CoefficientSet, Problem, add_theta, continuum_apply

__all__ = ["PRESETS", "get_preset", "MANUFACTURED_EXACT", "transport", "manufactured"]

PM1 = [(1,), (-1,)]
TWO_PI = 2 * math.pi
CLIP = "max(min(x1, 1), -1)"

MANUFACTURED_EXACT = parse("cos(x1)")


def model_1d(h: float = 0.5) -> Problem:
    """``u'' - u + f = 0`` on a wide box, the setting of the random-walk oracle."""
    return Problem(
        Domain("box", (-60.0,), (60.0,), h), Stencil(PM1),
        CoefficientSet(q={(1,): 1, (-1,): 1}, p={}, c=1, f="1/(1+x1^2)", g=0),
        name="model-1d",
    )


def transport(b: str, c: float = 1.0, theta: Optional[float] = None, h: float = 0.05,
              name: str = "transport", delta: float = 0.1) -> Problem:
    """Pure drift ``b u'`` with artificial diffusion: ``q = 0``, ``p_{+-1} = +-b/2 + theta``.

    ``theta`` defaults to ``100 sup|b'| + 1`` with ``sup|b'| = 1`` for the
    clipped drifts used here.
    """
    if theta is None:
        theta = 100 * 1.0 + 1
    base = Problem(
        Domain("box", (-2.0,), (2.0,), h), Stencil(PM1, tau0=0.0),
        CoefficientSet(q={}, p={(1,): f"0.5*({b})", (-1,): f"-0.5*({b})"}, c=c,
                       f="sin(x1)", g="cos(x1)"),
        c0=c, delta=delta, K1=1.0, T=1.0, name=name,
    )
    return add_theta(base, theta)


def transport_decreasing_b(h: float = 0.05) -> Problem:
    return transport(f"-{CLIP}", h=h, name="transport-decreasing-b")


def transport_increasing_b(h: float = 0.05) -> Problem:
    return transport(CLIP, c=0.1, theta=2.0, h=h, name="transport-increasing-b")


def manufactured(h: float = math.pi / 8) -> Problem:
    """``q = 1``, ``c = 2`` on the torus, ``f`` chosen so that ``cos(x1)`` solves the limit equation."""
    prob = Problem(
        Domain("periodic", (0.0,), (TWO_PI,), h), Stencil(PM1),
        CoefficientSet(q={(1,): 1, (-1,): 1}, p={}, c=2, f=0, g=0),
        c0=2.0, name="manufactured-cos",
    )
    return prob.with_coeffs(f=-continuum_apply(prob, MANUFACTURED_EXACT))


def degenerate_q_x2(h: float = 0.05) -> Problem:
    """Diffusion ``x1^2`` vanishing at the origin, on a box."""
    return Problem(
        Domain("box", (-1.0,), (1.0,), h), Stencil(PM1),
        CoefficientSet(q={(1,): "x1^2", (-1,): "x1^2"}, p={}, c=1, f="cos(x1)", g="1+x1"),
        kappa=0.1, T=0.5, name="degenerate-q-x2",
    )


def heat_periodic(h: float = math.pi / 16) -> Problem:
    return Problem(
        Domain("periodic", (0.0,), (TWO_PI,), h), Stencil(PM1),
        CoefficientSet(q={(1,): 1, (-1,): 1}, p={}, c=1, f=0, g="sin(x1)"),
        name="heat-periodic",
    )


def symmetric(h: float = TWO_PI / 32) -> Problem:
    """Symmetric stencil, ``x``-dependent symmetric ``q``, no drift: second-order consistent."""
    q = "1 + 0.5*sin(x1)"
    return Problem(
        Domain("periodic", (0.0,), (TWO_PI,), h), Stencil(PM1),
        CoefficientSet(q={(1,): q, (-1,): q}, p={}, c=1, f="cos(x1)", g=0),
        kappa=0.5, name="symmetric",
    )


def upwind(h: float = TWO_PI / 32) -> Problem:
    """Positive drift carried only by the forward direction: first-order consistent."""
    return Problem(
        Domain("periodic", (0.0,), (TWO_PI,), h), Stencil(PM1),
        CoefficientSet(q={}, p={(1,): "1 + 0.5*sin(x1)"}, c=1, f="cos(x1)", g=0),
        name="upwind",
    )


def drift_example(h: float = TWO_PI / 64) -> Problem:
    """Stencil ``{-3, -1, 1, 2}`` whose drift ``sum lam q_lam`` vanishes for any profile."""
    prof = "(1 + sin(x1))"
    return Problem(
        Domain("periodic", (0.0,), (TWO_PI,), h), Stencil([(-3,), (-1,), (1,), (2,)]),
        CoefficientSet(q={(-3,): 1, (-1,): f"3 - {prof}", (1,): prof, (2,): f"3 - {prof}"}, p={},
                       c=1, f="cos(x1)", g=0),
        name="drift-example",
    )


def constant_2d(h: float = TWO_PI / 16) -> Problem:
    """Constant coefficients on a 2D torus with a diagonal direction."""
    vecs = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)]
    q = {(1, 0): 1, (-1, 0): 1, (0, 1): 0.5, (0, -1): 0.5, (1, 1): 0.25, (-1, -1): 0.25}
    p = {(1, 0): 0.3, (-1, 0): 0.1, (0, 1): 0.2, (0, -1): 0.2}
    return Problem(
        Domain("periodic", (0.0, 0.0), (TWO_PI, TWO_PI), h), Stencil(vecs),
        CoefficientSet(q=q, p=p, c=1, f="sin(x1)*cos(x2)", g="cos(x1 + x2)"),
        delta=0.2, kappa=0.25, T=0.5, name="constant-2d",
    )


def corollary(h: float = 0.1) -> Problem:
    """No diffusion, ``c = 2``, ``f = 6``: the solution rises to ``f / c = 3``."""
    return Problem(
        Domain("box", (0.0,), (1.0,), h), Stencil(PM1),
        CoefficientSet(q={}, p={}, c=2, f=6, g=0),
        c0=2.0, T=5.0, name="corollary",
    )


PRESETS: Dict[str, Callable[..., Problem]] = {
    "model-1d": model_1d,
    "transport-decreasing-b": transport_decreasing_b,
    "transport-increasing-b": transport_increasing_b,
    "manufactured-cos": manufactured,
    "degenerate-q-x2": degenerate_q_x2,
    "heat-periodic": heat_periodic,
    "symmetric": symmetric,
    "upwind": upwind,
    "drift-example": drift_example,
    "constant-2d": constant_2d,
    "corollary": corollary,
}


def get_preset(name: str, h: Optional[float] = None) -> Problem:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return factory() if h is None else factory(h=h)
