"""TOML run configurations: loading, validation and rendering.

Layout::

    [problem]      dimension, domain ("box" | "periodic"), lower, upper, h, T, name
    [constants]    c0, delta, K1, tau0, theta, m, kappa
    [[stencil]]    lambda, q, p, tau           (one table per direction)
    [coefficients] c, f, g
    [run]          free-form subcommand parameters

Numeric fields accept numbers or constant expressions such as ``"pi/16"``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib
import tomli_w

from . import expr as ex
from .lattice import Domain, Stencil
from .operator import CoefficientSet, Problem, add_theta

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "render_config", "DEFAULTS"]

DEFAULTS = {
    "constants": {"c0": 1.0, "delta": 0.1, "K1": 1.0, "tau0": 0.0, "theta": 0.0, "m": 1},
    "run": {"tol": 1e-10, "t_samples": 17},
}
_SECTIONS = {"problem", "constants", "stencil", "coefficients", "run"}
_PROBLEM_KEYS = {"dimension", "domain", "lower", "upper", "h", "T", "name"}
_CONSTANT_KEYS = {"c0", "delta", "K1", "tau0", "theta", "m", "kappa"}
_STENCIL_KEYS = {"lambda", "q", "p", "tau"}
_COEFF_KEYS = {"c", "f", "g"}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


def _number(value, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(where, "expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            e = ex.parse(value)
        except ex.ExprError as exc:
            raise ConfigError(where, str(exc)) from None
        if ex.variables(e):
            raise ConfigError(where, "expected a constant expression")
        try:
            return ex.evaluate(e)
        except ex.ExprError as exc:
            raise ConfigError(where, str(exc)) from None
    raise ConfigError(where, "expected a number")


def _expression(value, where: str) -> str:
    if isinstance(value, bool):
        raise ConfigError(where, "expected an expression")
    if isinstance(value, (int, float)):
        return ex.render(ex.const(float(value)))
    if not isinstance(value, str):
        raise ConfigError(where, "expected an expression string")
    try:
        return ex.render(ex.parse(value))
    except ex.ExprError as exc:
        raise ConfigError(where, str(exc)) from None


def _unknown(section: str, data: dict, allowed: set):
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"{section}.{extra[0]}", "unknown key")


@dataclass
class RunConfig:
    """Normalised configuration: numbers as floats, expressions in canonical text."""

    problem: Dict[str, Any]
    constants: Dict[str, Any]
    stencil: List[Dict[str, Any]]
    coefficients: Dict[str, str]
    run: Dict[str, Any] = field(default_factory=dict)

    def to_problem(self) -> Problem:
        pr, co = self.problem, self.constants
        vecs = [tuple(s["lambda"]) for s in self.stencil]
        try:
            stencil = Stencil(vecs, tau=[s["tau"] for s in self.stencil], tau0=co["tau0"])
        except ValueError as exc:
            raise ConfigError("stencil", str(exc)) from None
        try:
            domain = Domain(pr["domain"], tuple(pr["lower"]), tuple(pr["upper"]), pr["h"])
        except ValueError as exc:
            raise ConfigError("problem", str(exc)) from None
        coeffs = CoefficientSet(
            q={v: s["q"] for v, s in zip(vecs, self.stencil)},
            p={v: s["p"] for v, s in zip(vecs, self.stencil)},
            **self.coefficients,
        )
        try:
            prob = Problem(domain, stencil, coeffs, c0=co["c0"], delta=co["delta"], K1=co["K1"],
                           m=int(co["m"]), T=pr["T"], kappa=co.get("kappa"), name=pr.get("name", ""))
        except ValueError as exc:
            raise ConfigError("constants", str(exc)) from None
        theta = co["theta"]
        if theta < 0:
            raise ConfigError("constants.theta", "must be nonnegative")
        if theta:
            try:
                prob = add_theta(prob, theta)
            except ValueError as exc:
                raise ConfigError("constants.theta", str(exc)) from None
        return prob

    def to_dict(self) -> dict:
        out = {
            "problem": dict(self.problem),
            "constants": dict(self.constants),
            "stencil": [dict(s) for s in self.stencil],
            "coefficients": dict(self.coefficients),
        }
        if self.run:
            out["run"] = dict(self.run)
        return out


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"parse error: {exc}") from None
    _unknown("config", raw, _SECTIONS)
    for name in ("problem", "stencil", "coefficients"):
        if name not in raw:
            raise ConfigError(name, "missing section")

    praw = raw["problem"]
    _unknown("problem", praw, _PROBLEM_KEYS)
    for key in ("domain", "lower", "upper", "h"):
        if key not in praw:
            raise ConfigError(f"problem.{key}", "missing")
    lower = [_number(v, f"problem.lower[{i}]") for i, v in enumerate(_as_list(praw["lower"], "problem.lower"))]
    upper = [_number(v, f"problem.upper[{i}]") for i, v in enumerate(_as_list(praw["upper"], "problem.upper"))]
    dim = int(praw.get("dimension", len(lower)))
    if len(lower) != dim or len(upper) != dim:
        raise ConfigError("problem.dimension", f"lower/upper must have {dim} entries")
    if praw["domain"] not in ("box", "periodic"):
        raise ConfigError("problem.domain", "must be 'box' or 'periodic'")
    problem = {"dimension": dim, "domain": praw["domain"], "lower": lower, "upper": upper,
               "h": _number(praw["h"], "problem.h"), "T": _number(praw.get("T", 1.0), "problem.T")}
    if "name" in praw:
        problem["name"] = str(praw["name"])

    craw = raw.get("constants", {})
    _unknown("constants", craw, _CONSTANT_KEYS)
    constants = dict(DEFAULTS["constants"])
    for key, value in craw.items():
        constants[key] = _number(value, f"constants.{key}")
    if not 0 <= constants["tau0"] <= 1:
        raise ConfigError("constants.tau0", f"tau0={constants['tau0']:g} outside [0,1]")
    if constants["m"] != int(constants["m"]):
        raise ConfigError("constants.m", "must be an integer")
    constants["m"] = int(constants["m"])

    entries = raw["stencil"]
    if not isinstance(entries, list) or not entries:
        raise ConfigError("stencil", "expected one or more [[stencil]] tables")
    stencil = []
    seen = set()
    for i, s in enumerate(entries):
        where = f"stencil[{i}]"
        _unknown(where, s, _STENCIL_KEYS)
        if "lambda" not in s:
            raise ConfigError(f"{where}.lambda", "missing")
        lam = _as_list(s["lambda"], f"{where}.lambda")
        if not all(isinstance(c, int) and not isinstance(c, bool) for c in lam):
            raise ConfigError(f"{where}.lambda", "entries must be integers")
        if len(lam) != dim:
            raise ConfigError(f"{where}.lambda", f"expected {dim} components")
        if not any(lam):
            raise ConfigError(f"{where}.lambda", "zero vector in stencil (0 ∉ Λ₁ is required)")
        if tuple(lam) in seen:
            raise ConfigError(f"{where}.lambda", f"duplicate direction {tuple(lam)}")
        seen.add(tuple(lam))
        tau = _number(s.get("tau", 1.0), f"{where}.tau")
        if not 0 <= tau <= 1:
            raise ConfigError(f"{where}.tau", f"tau={tau:g} outside [0,1]")
        stencil.append({"lambda": list(lam), "q": _expression(s.get("q", "0"), f"{where}.q"),
                        "p": _expression(s.get("p", "0"), f"{where}.p"), "tau": tau})

    kraw = raw["coefficients"]
    _unknown("coefficients", kraw, _COEFF_KEYS)
    coefficients = {k: _expression(kraw.get(k, "1" if k == "c" else "0"), f"coefficients.{k}")
                    for k in ("c", "f", "g")}
    for where, text in [*[(f"stencil[{i}].q", s["q"]) for i, s in enumerate(stencil)],
                        *[(f"stencil[{i}].p", s["p"]) for i, s in enumerate(stencil)],
                        *[(f"coefficients.{k}", v) for k, v in coefficients.items()]]:
        if ex.dimension(ex.parse(text)) > dim:
            raise ConfigError(where, f"uses a coordinate beyond dimension {dim}")

    run = dict(DEFAULTS["run"])
    run.update(raw.get("run", {}))
    return RunConfig(problem, constants, stencil, coefficients, run)


def _as_list(value, where: str) -> list:
    if isinstance(value, list):
        return value
    if isinstance(value, (int, float, str)) and not isinstance(value, bool):
        return [value]
    raise ConfigError(where, "expected a list")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def render_config(cfg: RunConfig) -> str:
    data = copy.deepcopy(cfg.to_dict())
    data["constants"] = {k: v for k, v in data["constants"].items() if v is not None}
    for k, v in list(data["problem"].items()):
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"problem.{k}", "not finite")
    return tomli_w.dumps(data)
