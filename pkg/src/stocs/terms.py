"""Abstract syntax of StocS systems, components, processes and predicates.

Every node is an immutable dataclass with a cached hash, so terms can be used
directly as CTMC states and as dictionary keys.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Any, Mapping, Union

Value = Union[str, int, float]
Item = tuple  # tuple of Value


def term(cls):
    """Frozen dataclass whose hash is computed once and not pickled."""
    cls = dataclass(frozen=True)(cls)
    fields_hash = cls.__hash__

    def __hash__(self):
        try:
            return self.__dict__["_hash"]
        except KeyError:
            h = fields_hash(self)
            object.__setattr__(self, "_hash", h)
            return h

    def __getstate__(self):
        return {k: v for k, v in self.__dict__.items() if k != "_hash"}

    cls.__hash__ = __hash__
    cls.__getstate__ = __getstate__
    return cls


class NotGround(ValueError):
    """An expression still mentions an unbound process variable."""


class MissingAttribute(LookupError):
    """An attribute is not defined by the interface evaluation at hand."""


# --------------------------------------------------------------------------
# expressions

@term
class Lit:
    value: Value


@term
class Var:
    name: str


@term
class Attr:
    name: str


@term
class Neg:
    operand: "Expr"


@term
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@term
class Func:
    name: str
    args: tuple


Expr = Union[Lit, Var, Attr, Neg, BinOp, Func]

ARITH = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
    "/": operator.truediv,
    "//": operator.floordiv,
    "%": operator.mod,
}
FUNCS = {"abs": abs, "min": min, "max": max}


def eval_expr(e: Expr, attrs: Mapping[str, Value] | None = None) -> Value:
    """Evaluate ``e``; attributes are looked up in ``attrs``."""
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, BinOp):
        return ARITH[e.op](eval_expr(e.left, attrs), eval_expr(e.right, attrs))
    if isinstance(e, Attr):
        if attrs is None or e.name not in attrs:
            raise MissingAttribute(e.name)
        return attrs[e.name]
    if isinstance(e, Var):
        raise NotGround(e.name)
    if isinstance(e, Neg):
        return -eval_expr(e.operand, attrs)
    if isinstance(e, Func):
        return FUNCS[e.name](*(eval_expr(a, attrs) for a in e.args))
    raise TypeError(f"not an expression: {e!r}")


def expr_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    if isinstance(e, Neg):
        return expr_vars(e.operand)
    if isinstance(e, Func):
        return set().union(*(expr_vars(a) for a in e.args)) if e.args else set()
    return set()


def expr_attrs(e: Expr) -> set[str]:
    if isinstance(e, Attr):
        return {e.name}
    if isinstance(e, BinOp):
        return expr_attrs(e.left) | expr_attrs(e.right)
    if isinstance(e, Neg):
        return expr_attrs(e.operand)
    if isinstance(e, Func):
        return set().union(*(expr_attrs(a) for a in e.args)) if e.args else set()
    return set()


def subst_expr(e: Expr, theta: Mapping[str, Value]) -> Expr:
    if isinstance(e, Var):
        return Lit(theta[e.name]) if e.name in theta else e
    if isinstance(e, BinOp):
        left, right = subst_expr(e.left, theta), subst_expr(e.right, theta)
        if left is e.left and right is e.right:
            return e
        return BinOp(e.op, left, right)
    if isinstance(e, Neg):
        o = subst_expr(e.operand, theta)
        return e if o is e.operand else Neg(o)
    if isinstance(e, Func):
        args = tuple(subst_expr(a, theta) for a in e.args)
        return Func(e.name, args)
    return e


# --------------------------------------------------------------------------
# ensemble predicates

@term
class TT:
    pass


@term
class Compare:
    lhs: Expr
    op: str  # one of < <= > >= == !=
    rhs: Expr


@term
class Not:
    operand: "Predicate"


@term
class And:
    left: "Predicate"
    right: "Predicate"


Predicate = Union[TT, Compare, Not, And]
CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")


def Or(p: Predicate, q: Predicate) -> Predicate:
    """Disjunction, encoded with negation and conjunction."""
    return Not(And(Not(p), Not(q)))


def subst_pred(p: Predicate, theta: Mapping[str, Value]) -> Predicate:
    if isinstance(p, Compare):
        return Compare(subst_expr(p.lhs, theta), p.op, subst_expr(p.rhs, theta))
    if isinstance(p, Not):
        return Not(subst_pred(p.operand, theta))
    if isinstance(p, And):
        return And(subst_pred(p.left, theta), subst_pred(p.right, theta))
    return p


def pred_vars(p: Predicate) -> set[str]:
    if isinstance(p, Compare):
        return expr_vars(p.lhs) | expr_vars(p.rhs)
    if isinstance(p, Not):
        return pred_vars(p.operand)
    if isinstance(p, And):
        return pred_vars(p.left) | pred_vars(p.right)
    return set()


def pred_attrs(p: Predicate) -> set[str]:
    if isinstance(p, Compare):
        return expr_attrs(p.lhs) | expr_attrs(p.rhs)
    if isinstance(p, Not):
        return pred_attrs(p.operand)
    if isinstance(p, And):
        return pred_attrs(p.left) | pred_attrs(p.right)
    return set()


# --------------------------------------------------------------------------
# actions and targets

class _Self:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "self"

    def __reduce__(self):
        return (_Self, ())


SELF = _Self()
Target = Union[_Self, Predicate]


@term
class Formal:
    """Template field ``?name`` binding ``name`` in the continuation."""
    name: str


PUT, GET, QRY = "put", "get", "qry"


@term
class Action:
    kind: str  # put | get | qry
    fields: tuple  # Expr (and Formal, for get/qry)
    target: Any  # SELF or a Predicate

    @property
    def binders(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields if isinstance(f, Formal))


def ground_payload(a: Action) -> tuple:
    """Evaluate the payload of ``a``: an item for put, a template otherwise.

    Raises :class:`NotGround` if a field still mentions a variable.
    """
    out = []
    for f in a.fields:
        out.append(f if isinstance(f, Formal) else eval_expr(f))
    return tuple(out)


def subst_action(a: Action, theta: Mapping[str, Value]) -> Action:
    fields = tuple(f if isinstance(f, Formal) else subst_expr(f, theta) for f in a.fields)
    target = a.target if a.target is SELF else subst_pred(a.target, theta)
    return Action(a.kind, fields, target)


# --------------------------------------------------------------------------
# processes

@term
class Nil:
    pass


NIL = Nil()


@term
class Prefix:
    action: Action
    cont: "Process"


@term
class Choice:
    left: "Process"
    right: "Process"


@term
class Par:
    left: "Process"
    right: "Process"


@term
class Call:
    name: str
    args: tuple = ()


@term
class Envelope:
    """Pending put message ``item`` for predicate ``predicate`` (runtime only)."""
    item: tuple
    predicate: Any
    rate: float


Process = Union[Nil, Prefix, Choice, Par, Call, Envelope]


def par(p: Process, q: Process) -> Process:
    """Parallel composition modulo ``nil | P = P | nil = P``."""
    if isinstance(p, Nil):
        return q
    if isinstance(q, Nil):
        return p
    return Par(p, q)


def substitute(p: Process, theta: Mapping[str, Value]) -> Process:
    """Replace free variables of ``p`` according to ``theta``.

    Template formals of a prefix bind in its continuation and shadow ``theta``.
    """
    if not theta:
        return p
    if isinstance(p, Prefix):
        a = subst_action(p.action, theta)
        bound = p.action.binders
        inner = {k: v for k, v in theta.items() if k not in bound} if bound else theta
        return Prefix(a, substitute(p.cont, inner))
    if isinstance(p, Choice):
        return Choice(substitute(p.left, theta), substitute(p.right, theta))
    if isinstance(p, Par):
        return Par(substitute(p.left, theta), substitute(p.right, theta))
    if isinstance(p, Call):
        if not p.args:
            return p
        return Call(p.name, tuple(subst_expr(a, theta) for a in p.args))
    return p


def free_vars(p: Process) -> set[str]:
    if isinstance(p, Prefix):
        a = p.action
        fv: set[str] = set()
        for f in a.fields:
            if not isinstance(f, Formal):
                fv |= expr_vars(f)
        if a.target is not SELF:
            fv |= pred_vars(a.target)
        return fv | (free_vars(p.cont) - set(a.binders))
    if isinstance(p, (Choice, Par)):
        return free_vars(p.left) | free_vars(p.right)
    if isinstance(p, Call):
        return set().union(*(expr_vars(a) for a in p.args)) if p.args else set()
    return set()


@dataclass(frozen=True)
class ProcDef:
    name: str
    params: tuple[str, ...]
    body: Process


class Definitions(dict):
    """Process definitions ``A(x1..xn) = P`` keyed by name."""

    def unfold(self, call: Call) -> Process:
        d = self[call.name]
        if len(d.params) != len(call.args):
            raise TypeError(f"{call.name} expects {len(d.params)} argument(s), got {len(call.args)}")
        if not d.params:
            return d.body
        theta = {x: eval_expr(v) for x, v in zip(d.params, call.args)}
        return substitute(d.body, theta)


# --------------------------------------------------------------------------
# components and systems

@dataclass(frozen=True, eq=False)
class ComponentKind:
    """Static part of a component: its name, interface and repository type.

    Compared by identity; kinds are created once per model.
    """
    name: str
    interface: Any
    repository: Any


@term
class Component:
    kind: ComponentKind
    knowledge: Any  # KnowledgeState
    process: Process
    envelopes: tuple = ()  # sorted multiset of Envelope (net-or only)

    @property
    def name(self) -> str:
        return self.kind.name

    def with_(self, **changes) -> Component:
        d = {"kind": self.kind, "knowledge": self.knowledge,
             "process": self.process, "envelopes": self.envelopes}
        d.update(changes)
        return Component(**d)


@dataclass(frozen=True)
class SystemPar:
    """Binary parallel composition of systems, as written in source terms."""
    left: Any
    right: Any


System = tuple  # flattened, ordered tuple of Component


def flatten(s) -> list[Component]:
    """In-order listing of the components of ``s``; duplicates are kept."""
    if isinstance(s, Component):
        return [s]
    if isinstance(s, SystemPar):
        return flatten(s.left) + flatten(s.right)
    if isinstance(s, (tuple, list)):
        out: list[Component] = []
        for x in s:
            out.extend(flatten(x))
        return out
    raise TypeError(f"not a system: {s!r}")


def compose(*parts) -> System:
    return tuple(flatten(list(parts)))
