"""Rate function and loss-probability function, loaded from JSON.

Rules are tried in order and the first match wins. A rule matches on the
action kind, the target shape (``self`` or a predicate), the tag (first field)
of the item or template, and an optional boolean ``when`` expression.

Expressions are a small subset of Python evaluated over::

    src, dst   attribute views of the source/destination evaluation
               (``dst`` is absent for put actions)
    item       the transmitted/retrieved item (a tuple)
    kind       the action kind as a string
    <params>   any entry of the config's ``params`` object
    abs min max sqrt exp log distance has

``distance(a, b)`` is the Manhattan distance between grid cells
``a`` and ``b`` (row-major, width from ``grid.width``), or ``|a - b|`` when no
grid is configured.
"""
from __future__ import annotations

import ast
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .terms import SELF

KINDS = ("put", "get", "qry", "envelope")


class RateConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ActionDescriptor:
    """An element of the action set seen by the rate function.

    ``template`` is set for get/qry; ``item`` is the transmitted or retrieved
    item; ``target`` is ``SELF`` or a predicate.
    """
    kind: str
    item: tuple
    target: Any = SELF
    template: tuple | None = None

    @property
    def tag(self):
        src = self.template if self.template is not None else self.item
        return src[0] if src else None


class _Missing(LookupError):
    pass


class AttrView:
    __slots__ = ("_e",)

    def __init__(self, e):
        self._e = e

    def __getattr__(self, name):
        try:
            return self._e[name]
        except KeyError:
            raise _Missing(name) from None


_ALLOWED_NODES = (
    ast.Expression, ast.BoolOp, ast.BinOp, ast.UnaryOp, ast.Compare, ast.IfExp,
    ast.Call, ast.Name, ast.Load, ast.Attribute, ast.Subscript, ast.Constant,
    ast.And, ast.Or, ast.Not, ast.USub, ast.UAdd, ast.Add, ast.Sub, ast.Mult,
    ast.Div, ast.FloorDiv, ast.Mod, ast.Pow, ast.Eq, ast.NotEq, ast.Lt, ast.LtE,
    ast.Gt, ast.GtE,
)


def _has(view, name):
    return isinstance(view, AttrView) and name in view._e


class _Expr:
    def __init__(self, source, names: set[str]):
        self.source = source
        if isinstance(source, (int, float)):
            self.code = None
            self.constant = float(source)
            return
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise RateConfigError(f"bad expression {source!r}: {exc.msg}") from None
        used = set()
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED_NODES):
                raise RateConfigError(f"construct {type(node).__name__} not allowed in {source!r}")
            if isinstance(node, ast.Attribute) and node.attr.startswith("_"):
                raise RateConfigError(f"private attribute in {source!r}")
            if isinstance(node, ast.Name):
                if node.id not in names:
                    raise RateConfigError(f"unknown name {node.id!r} in {source!r}")
                used.add(node.id)
        self.code = compile(tree, "<rate>", "eval")
        self.constant = None
        if not used & {"src", "dst", "item", "kind"}:
            self.constant = "pending"

    def __call__(self, env):
        if self.code is None:
            return self.constant
        return eval(self.code, {"__builtins__": {}}, env)  # noqa: S307 - AST whitelisted


def _as_list(kind):
    if kind is None:
        return None
    return (kind,) if isinstance(kind, str) else tuple(kind)


@dataclass
class _Rule:
    kinds: tuple | None
    target: str
    tag: Any
    when: _Expr | None
    value: _Expr
    index: int

    def matches(self, a: ActionDescriptor, env) -> bool:
        if self.kinds is not None and a.kind not in self.kinds:
            return False
        if self.target == "self" and a.target is not SELF:
            return False
        if self.target == "pred" and a.target is SELF:
            return False
        if self.tag is not None and a.tag != self.tag:
            return False
        if self.when is not None:
            try:
                return bool(self.when(env))
            except (_Missing, TypeError, IndexError, ZeroDivisionError):
                return False
        return True


_SCHEMA = None


def _schema():
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files("stocs").joinpath("schemas/rates.schema.json").read_text()
        _SCHEMA = json.loads(text)
    return _SCHEMA


class RateConfig:
    """The pair (rate function, loss-probability function) of a model run."""

    def __init__(self, data: dict | None = None):
        data = {} if data is None else data
        try:
            jsonschema.validate(data, _schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise RateConfigError(f"{where}: {exc.message}") from None
        self.data = data
        self.default_rate = float(data.get("default_rate", 1.0))
        self.default_error = float(data.get("default_error", 0.0))
        self.params = dict(data.get("params", {}))
        width = data.get("grid", {}).get("width")
        self.grid_width = width

        def distance(a, b):
            if width:
                return abs(a // width - b // width) + abs(a % width - b % width)
            return abs(a - b)

        self._globals = {
            "abs": abs, "min": min, "max": max, "sqrt": math.sqrt, "exp": math.exp,
            "log": math.log, "distance": distance, "has": _has, "float": float, "int": int,
        }
        self._globals.update(self.params)
        names = set(self._globals) | {"src", "dst", "item", "kind"}
        self.rate_rules = [self._rule(r, "rate", names, i) for i, r in enumerate(data.get("rates", []))]
        self.error_rules = [self._rule(r, "prob", names, i) for i, r in enumerate(data.get("errors", []))]
        self._check_constants()
        self._rate_cache: dict = {}
        self._loss_cache: dict = {}

    def __reduce__(self):
        return (RateConfig, (self.data,))

    @staticmethod
    def _rule(r: dict, key: str, names, index) -> _Rule:
        when = _Expr(r["when"], names) if "when" in r else None
        return _Rule(_as_list(r.get("kind")), r.get("target", "any"), r.get("tag"),
                     when, _Expr(r[key], names), index)

    def _check_constants(self):
        for kind, rules in (("rates", self.rate_rules), ("errors", self.error_rules)):
            for r in rules:
                if r.value.constant == "pending":
                    try:
                        r.value.constant = float(r.value(dict(self._globals)))
                    except Exception as exc:  # noqa: BLE001
                        raise RateConfigError(f"{kind}[{r.index}]: {exc}") from None
                    r.value.code = None
                if r.value.constant is not None:
                    self._check_value(kind, r.index, r.value.constant)

    @staticmethod
    def _check_value(kind, index, v):
        if not math.isfinite(v) or v < 0:
            raise RateConfigError(f"{kind}[{index}]: value {v!r} is negative or not finite")
        if kind == "errors" and v > 1:
            raise RateConfigError(f"{kind}[{index}]: probability {v!r} exceeds 1")

    @classmethod
    def load(cls, path: str | Path) -> RateConfig:
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise RateConfigError(f"{path}: {exc}") from None
        return cls(data)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.data, sort_keys=True).encode()).hexdigest()

    def _env(self, src, a: ActionDescriptor, dst):
        env = dict(self._globals)
        env["src"] = AttrView(src)
        env["dst"] = AttrView(dst) if dst is not None else None
        env["item"] = a.item
        env["kind"] = a.kind
        return env

    def _dispatch(self, rules, kind, src, a, dst, default):
        env = None
        for r in rules:
            if env is None:
                env = self._env(src, a, dst)
            if r.matches(a, env):
                try:
                    v = float(r.value(env))
                except (_Missing, TypeError, IndexError, ZeroDivisionError, ValueError) as exc:
                    raise RateConfigError(f"{kind}[{r.index}] failed on {a}: {exc!r}") from None
                self._check_value(kind, r.index, v)
                return v
        return default

    def rate(self, src, a: ActionDescriptor, dst=None) -> float:
        """``R(src, a, dst)``; ``dst`` is ``None`` for the wildcard ``_``."""
        key = (src, a, dst)
        try:
            return self._rate_cache[key]
        except KeyError:
            pass
        except TypeError:
            # plain dict evaluations are not hashable; evaluate without caching
            return self._dispatch(self.rate_rules, "rates", src, a, dst, self.default_rate)
        v = self._dispatch(self.rate_rules, "rates", src, a, dst, self.default_rate)
        self._rate_cache[key] = v
        return v

    def loss_probability(self, src, a: ActionDescriptor, dst) -> float:
        key = (src, a, dst)
        try:
            return self._loss_cache[key]
        except KeyError:
            pass
        except TypeError:
            # plain dict evaluations are not hashable; evaluate without caching
            return self._dispatch(self.error_rules, "errors", src, a, dst, self.default_error)
        v = self._dispatch(self.error_rules, "errors", src, a, dst, self.default_error)
        self._loss_cache[key] = v
        return v
