"""Experiment configuration: flat ``key=value`` text or a JSON object.

Numeric values may be arithmetic expressions over ``pi`` (e.g. ``pi/64``).
List-valued keys take comma-separated values in text form.
"""
from __future__ import annotations

import ast
import json
import math
import operator
from dataclasses import dataclass, field
from typing import Any, Callable


class ConfigError(ValueError):
    pass


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_NAMES = {"pi": math.pi}


def eval_number(text: str) -> float:
    """Evaluate a numeric literal or arithmetic expression over ``pi``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError:
        raise ConfigError(f"cannot parse number {text!r}") from None

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return node.value
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](walk(node.operand))
        raise ConfigError(f"unsupported token in {text!r}")

    try:
        return walk(tree)
    except ZeroDivisionError:
        raise ConfigError(f"division by zero in {text!r}") from None


def _as_float(v) -> float:
    if isinstance(v, bool):
        raise ConfigError(f"expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        return float(eval_number(v))
    raise ConfigError(f"expected a number, got {v!r}")


def _as_int(v) -> int:
    x = _as_float(v)
    if x != int(x):
        raise ConfigError(f"expected an integer, got {v!r}")
    return int(x)


def _as_list(conv):
    def parse(v):
        if isinstance(v, str):
            items = [s for s in v.split(",") if s.strip()]
        elif isinstance(v, (list, tuple)):
            items = list(v)
        else:
            items = [v]
        if not items:
            raise ConfigError("empty list")
        return [conv(i) for i in items]
    return parse


def _as_str(v) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"expected text, got {v!r}")
    return v.strip()


CONVERTERS: dict[str, Callable[[Any], Any]] = {
    "float": _as_float,
    "int": _as_int,
    "str": _as_str,
    "floats": _as_list(_as_float),
    "ints": _as_list(_as_int),
}


@dataclass(frozen=True)
class Param:
    kind: str
    default: Any = None
    choices: tuple | None = None
    check: Callable[[Any], str | None] | None = None
    required: bool = False


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: dict = field(default_factory=dict)
    sources: dict = field(default_factory=dict)  # key -> "line N" or "json"

    def __getitem__(self, key):
        return self.parameters[key]


def read_raw(text: str) -> tuple[dict, dict]:
    """Parse text into raw values plus a location for each key."""
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("JSON config must be an object")
        return data, {k: "json" for k in data}
    raw, where = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key], where[key] = value, f"line {lineno}"
    return raw, where


def build_config(experiment: str, schema: dict[str, Param], raw: dict, where: dict) -> ExperimentConfig:
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        k = unknown[0]
        raise ConfigError(f"{where.get(k, 'override')}: unknown key {k!r} for {experiment} "
                          f"(allowed: {', '.join(sorted(schema))})")
    params = {}
    for key, p in schema.items():
        if key not in raw:
            if p.required:
                raise ConfigError(f"missing required key {key!r} for {experiment}")
            params[key] = p.default
            continue
        loc = where.get(key, "override")
        try:
            value = CONVERTERS[p.kind](raw[key])
        except ConfigError as exc:
            raise ConfigError(f"{loc}: key {key!r}: {exc}") from None
        if p.choices is not None and value not in p.choices:
            raise ConfigError(f"{loc}: key {key!r}: {value!r} not one of {p.choices}")
        if p.check is not None:
            msg = p.check(value)
            if msg:
                raise ConfigError(f"{loc}: key {key!r}: {msg}")
        params[key] = value
    return ExperimentConfig(experiment, params, dict(where))
