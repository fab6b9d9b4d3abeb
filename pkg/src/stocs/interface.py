"""Component interfaces: attributes computed from the knowledge state.

An interface is a list of rules ``attribute = extraction``. Evaluating it on a
knowledge state gives an :class:`Evaluation`, the attribute map against which
ensemble predicates are checked.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .terms import (TT, And, Compare, MissingAttribute, Not, NotGround, Value,
                    eval_expr)


@dataclass(frozen=True)
class Const:
    value: Value


@dataclass(frozen=True)
class FieldOf:
    """Field ``index`` of the unique item whose first field is ``tag``."""
    tag: Value
    index: int


@dataclass(frozen=True)
class CountOf:
    """Number of items (with multiplicity) whose first field is ``tag``."""
    tag: Value


Extraction = Union[Const, FieldOf, CountOf]


@dataclass(frozen=True)
class InterfaceDef:
    name: str
    rules: tuple[tuple[str, Extraction], ...] = ()

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.rules)


class Evaluation(dict):
    """Hashable attribute map; never mutated after construction."""

    __slots__ = ("_h",)

    def __hash__(self):
        try:
            return self._h
        except AttributeError:
            self._h = hash(frozenset(self.items()))
            return self._h

    def __reduce__(self):
        return (Evaluation, (dict(self),))

    def __repr__(self):
        return "{" + ", ".join(f"{k}: {v!r}" for k, v in self.items()) + "}"


def _extract(rule: Extraction, k):
    if isinstance(rule, Const):
        return rule.value
    if isinstance(rule, FieldOf):
        tagged = k.tagged(rule.tag)
        if len(tagged) != 1 or tagged[0][1] != 1:
            raise MissingAttribute(rule.tag)
        t = tagged[0][0]
        if not 0 <= rule.index < len(t):
            raise MissingAttribute(rule.tag)
        return t[rule.index]
    if isinstance(rule, CountOf):
        return sum(n for _, n in k.tagged(rule.tag))
    raise TypeError(rule)


def evaluate(iface: InterfaceDef, k, name: str | None = None) -> Evaluation:
    """``I(K)``. Rules without a unique source item leave the attribute absent."""
    out = Evaluation()
    for attr, rule in iface.rules:
        try:
            out[attr] = _extract(rule, k)
        except MissingAttribute:
            pass
    if "id" not in out:
        out["id"] = name if name is not None else iface.name
    return out


def satisfies(e, p) -> bool:
    """``e |= p``, homomorphic in ``!`` and ``&&``.

    A comparison that mentions an attribute absent from ``e``, or compares
    values of incomparable types, is false.
    """
    return _holds(e, p)


def _holds(e, p) -> bool:
    if isinstance(p, Compare):
        try:
            lhs = eval_expr(p.lhs, e)
            rhs = eval_expr(p.rhs, e)
            return _compare(lhs, p.op, rhs)
        except (MissingAttribute, NotGround, TypeError, ZeroDivisionError):
            return False
    if isinstance(p, And):
        return _holds(e, p.left) and _holds(e, p.right)
    if isinstance(p, Not):
        return not _holds(e, p.operand)
    if isinstance(p, TT):
        return True
    raise TypeError(f"not a predicate: {p!r}")


def _compare(a, op: str, b) -> bool:
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ValueError(op)
