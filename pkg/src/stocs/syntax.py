"""Concrete syntax for StocS model files (``.stocs``).

::

    # comment
    attributes kind, bikes, loc;
    repository users = tuplespace();
    interface Station { kind = "station"; bikes = field("station", 1); }
    proc P(x) = get(<"a", ?v>)@(bikes > x).put(<"b", v>)@self.P(x) + nil;
    component s * 2 {
        interface Station;
        repository users;
        knowledge { <"station", 5> }
        process P(0);
    }

Processes: ``nil``, ``a.P``, ``P + P``, ``P | P``, ``A(e, ...)``. Actions:
``put(<e, ...>)@c``, ``get(<f, ...>)@c``, ``qry(<f, ...>)@c`` where a template
field ``f`` is an expression or a formal ``?x``. Targets are ``self`` or a
parenthesised predicate built from ``tt``/``true``, ``false``, ``!``, ``&&``,
``||`` and comparisons ``< <= > >= == !=`` between expressions. Unicode
``⟨ ⟩ ≤ ≥ ≠ ¬ ∧ ∨`` are accepted as aliases.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .interface import Const, CountOf, FieldOf, InterfaceDef
from .knowledge import KnowledgeState, make_repository
from .terms import (FUNCS, NIL, SELF, TT, Action, And, Attr, BinOp, Call, Choice, Compare,
                    ComponentKind, Component, Definitions, Envelope, Formal, Func, Lit, Neg,
                    Nil, Not, NotGround, Or, Par, Prefix, ProcDef, Var, eval_expr, expr_vars,
                    pred_attrs, pred_vars)


class ParseError(Exception):
    def __init__(self, line: int, col: int, message: str, expected=()):
        self.line, self.col, self.message = line, col, message
        self.expected = tuple(sorted(set(expected)))
        super().__init__(f"{line}:{col}: {message}")


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    severity: str
    message: str

    def format(self, filename: str = "<model>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.severity}: {self.message}"


@dataclass
class RepositoryDecl:
    name: str
    type: str
    params: dict
    line: int = 0
    col: int = 0


@dataclass
class ComponentDecl:
    name: str
    count: int = 1
    interface: str | InterfaceDef | None = None
    repository: str | None = None
    knowledge: tuple = ()
    process: object = NIL
    line: int = 0
    col: int = 0


@dataclass
class ModelFile:
    attributes: tuple = ()
    repositories: dict = field(default_factory=dict)
    interfaces: dict = field(default_factory=dict)
    definitions: Definitions = field(default_factory=Definitions)
    components: list = field(default_factory=list)
    rates: str | None = None
    # source positions: name -> (line, col)
    positions: dict = field(default_factory=dict)
    attribute_uses: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# tokens

_UNICODE = {"⟨": "<", "⟩": ">", "≤": "<=", "≥": ">=", "≠": "!=", "¬": "!", "∧": "&&", "∨": "||"}
_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>\d+\.\d+(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+|\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>//|<=|>=|==|!=|&&|\|\||[()\[\]{}<>,;.@+\-*/%|=!?⟨⟩≤≥≠¬∧∨])
""", re.VERBOSE)

KEYWORDS = {"put", "get", "qry", "self", "nil", "proc", "component", "interface",
            "repository", "knowledge", "process", "attributes", "rates", "tt", "true", "false"}
CMP = ("<", "<=", ">", ">=", "==", "!=")


@dataclass(frozen=True)
class Token:
    kind: str  # name | keyword | number | string | op | eof
    value: object
    line: int
    col: int
    offset: int


def tokenize(text: str) -> list[Token]:
    out = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise ParseError(line, col, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "string":
            out.append(Token("string", json.loads(s), line, col, pos))
        elif kind == "number":
            v = float(s) if any(ch in s for ch in ".eE") else int(s)
            out.append(Token("number", v, line, col, pos))
        elif kind == "name":
            out.append(Token("keyword" if s in KEYWORDS else "name", s, line, col, pos))
        elif kind == "op":
            out.append(Token("op", _UNICODE.get(s, s), line, col, pos))
        pos = m.end()
    out.append(Token("eof", None, line, len(text) - line_start + 1, len(text)))
    return out


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.model = ModelFile()

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, message: str, expected=(), tok: Token | None = None):
        t = tok or self.tok
        raise ParseError(t.line, t.col, message, expected)

    def at(self, *values) -> bool:
        t = self.tok
        return t.kind in ("op", "keyword") and t.value in values

    def accept(self, value) -> bool:
        if self.at(value):
            self.i += 1
            return True
        return False

    def expect(self, value) -> Token:
        if not self.at(value):
            got = "end of input" if self.tok.kind == "eof" else repr(self.tok.value)
            self.error(f"expected {value!r}, found {got}", (value,))
        t = self.tok
        self.i += 1
        return t

    def name(self, what="name") -> str:
        t = self.tok
        if t.kind != "name":
            got = "end of input" if t.kind == "eof" else repr(t.value)
            self.error(f"expected {what}, found {got}", ("<name>",))
        self.i += 1
        return t.value

    def integer(self) -> int:
        t = self.tok
        if t.kind != "number" or not isinstance(t.value, int):
            self.error("expected an integer", ("<int>",))
        self.i += 1
        return t.value

    # declarations
    def model_file(self) -> ModelFile:
        while self.tok.kind != "eof":
            self.declaration()
        return self.model

    def _define(self, table: str, name: str, tok: Token):
        key = (table, name)
        if key in self.model.positions:
            line, col = self.model.positions[key]
            raise ParseError(tok.line, tok.col, f"duplicate definition of {table} {name!r} (first at {line}:{col})")
        self.model.positions[key] = (tok.line, tok.col)

    def declaration(self):
        t = self.tok
        if self.accept("attributes"):
            names = [self.name("attribute name")]
            while self.accept(","):
                names.append(self.name("attribute name"))
            self.expect(";")
            self.model.attributes = tuple(dict.fromkeys(self.model.attributes + tuple(names)))
        elif self.accept("repository"):
            nt = self.tok
            name = self.name()
            self._define("repository", name, nt)
            self.expect("=")
            rtype = self.name("repository type")
            self.expect("(")
            params = {}
            if not self.at(")"):
                while True:
                    k = self.name("parameter name")
                    self.expect("=")
                    params[k] = self.literal()
                    if not self.accept(","):
                        break
            self.expect(")")
            self.expect(";")
            self.model.repositories[name] = RepositoryDecl(name, rtype, params, nt.line, nt.col)
        elif self.accept("interface"):
            nt = self.tok
            name = self.name()
            self._define("interface", name, nt)
            self.model.interfaces[name] = self.interface_body(name)
        elif self.accept("proc"):
            nt = self.tok
            name = self.name("process name")
            self._define("process", name, nt)
            params: list[str] = []
            if self.accept("("):
                if not self.at(")"):
                    params.append(self.name("parameter"))
                    while self.accept(","):
                        params.append(self.name("parameter"))
                self.expect(")")
            self.expect("=")
            body = self.process(frozenset(params))
            self.expect(";")
            self.model.definitions[name] = ProcDef(name, tuple(params), body)
        elif self.accept("component"):
            self.component()
        elif self.accept("rates"):
            if self.tok.kind != "string":
                self.error("expected a file name string", ("<string>",))
            self.model.rates = self.tok.value
            self.i += 1
            self.expect(";")
        else:
            self.error("expected a declaration",
                       ("attributes", "repository", "interface", "proc", "component", "rates"), t)

    def literal(self):
        t = self.tok
        if self.accept("["):
            out = []
            if not self.at("]"):
                out.append(self.literal())
                while self.accept(","):
                    out.append(self.literal())
            self.expect("]")
            return out
        sign = -1 if self.accept("-") else 1
        t = self.tok
        if t.kind == "number":
            self.i += 1
            return sign * t.value
        if t.kind == "string" and sign == 1:
            self.i += 1
            return t.value
        if t.kind == "keyword" and t.value in ("true", "false") and sign == 1:
            self.i += 1
            return t.value == "true"
        self.error("expected a literal", ("<number>", "<string>", "["))

    def interface_body(self, name: str) -> InterfaceDef:
        self.expect("{")
        rules = []
        while not self.accept("}"):
            at = self.tok
            attr = self.name("attribute name")
            self.model.attribute_uses.setdefault(attr, (at.line, at.col))
            self.expect("=")
            rules.append((attr, self.extraction()))
            self.expect(";")
        return InterfaceDef(name, tuple(rules))

    def extraction(self):
        t = self.tok
        if t.kind == "name" and t.value in ("field", "count"):
            self.i += 1
            self.expect("(")
            tag = self.literal()
            if t.value == "field":
                self.expect(",")
                idx = self.integer()
                self.expect(")")
                return FieldOf(tag, idx)
            self.expect(")")
            return CountOf(tag)
        return Const(self.literal())

    def component(self):
        nt = self.tok
        decl = ComponentDecl(self.name("component name"), line=nt.line, col=nt.col)
        if self.accept("*"):
            decl.count = self.integer()
        self.expect("{")
        while not self.accept("}"):
            if self.accept("interface"):
                if self.at("{"):
                    decl.interface = self.interface_body(decl.name)
                else:
                    decl.interface = self.name("interface name")
                    self.expect(";")
            elif self.accept("repository"):
                decl.repository = self.name("repository name")
                self.expect(";")
            elif self.accept("knowledge"):
                self.expect("{")
                items = []
                if not self.at("}"):
                    items.append(self.tuple_(frozenset(), "knowledge"))
                    while self.accept(","):
                        items.append(self.tuple_(frozenset(), "knowledge"))
                self.expect("}")
                self.accept(";")
                decl.knowledge = tuple(items)
            elif self.accept("process"):
                decl.process = self.process(frozenset())
                self.expect(";")
            else:
                self.error("expected a component clause",
                           ("interface", "repository", "knowledge", "process", "}"))
        self.model.components.append(decl)

    # processes
    def process(self, scope):
        left = self.choice(scope)
        while self.accept("|"):
            left = Par(left, self.choice(scope))
        return left

    def choice(self, scope):
        left = self.seq(scope)
        while self.accept("+"):
            left = Choice(left, self.seq(scope))
        return left

    def seq(self, scope):
        if self.at("put", "get", "qry"):
            action = self.action(scope)
            self.expect(".")
            return Prefix(action, self.seq(scope | set(action.binders)))
        return self.primary(scope)

    def primary(self, scope):
        if self.accept("nil"):
            return NIL
        if self.accept("("):
            p = self.process(scope)
            self.expect(")")
            return p
        if self.tok.kind == "name":
            name = self.name()
            args = []
            if self.accept("("):
                if not self.at(")"):
                    args.append(self.expr(scope, "payload"))
                    while self.accept(","):
                        args.append(self.expr(scope, "payload"))
                self.expect(")")
            return Call(name, tuple(args))
        self.error("expected a process", ("nil", "put", "get", "qry", "(", "<name>"))

    def action(self, scope) -> Action:
        kind = self.tok.value
        self.i += 1
        self.expect("(")
        fields = self.tuple_(scope, "put" if kind == "put" else "template")
        self.expect(")")
        self.expect("@")
        if self.accept("self"):
            target = SELF
        elif self.at("tt", "true"):
            self.i += 1
            target = TT()
        elif self.at("("):
            self.i += 1
            target = self.predicate(scope)
            self.expect(")")
        else:
            self.error("expected a target", ("self", "(", "tt"))
        return Action(kind, fields, target)

    def tuple_(self, scope, context):
        self.expect("<")
        fields = []
        if not self.at(">"):
            fields.append(self.tuple_field(scope, context))
            while self.accept(","):
                fields.append(self.tuple_field(scope, context))
        self.expect(">")
        if context == "template":
            names = [f.name for f in fields if isinstance(f, Formal)]
            if len(names) != len(set(names)):
                self.error("formal names must be distinct within a template")
        return tuple(fields)

    def tuple_field(self, scope, context):
        if self.at("?"):
            if context != "template":
                self.error("formal fields are only allowed in get/qry templates")
            self.i += 1
            return Formal(self.name("variable name"))
        return self.expr(scope, "knowledge" if context == "knowledge" else "payload")

    # predicates
    def predicate(self, scope):
        left = self.conj(scope)
        while self.accept("||"):
            left = Or(left, self.conj(scope))
        return left

    def conj(self, scope):
        left = self.unary_pred(scope)
        while self.accept("&&"):
            left = And(left, self.unary_pred(scope))
        return left

    def unary_pred(self, scope):
        if self.accept("!"):
            return Not(self.unary_pred(scope))
        if self.at("tt", "true"):
            self.i += 1
            return TT()
        if self.accept("false"):
            return Not(TT())
        if self.at("("):
            save = self.i
            try:
                self.i += 1
                p = self.predicate(scope)
                self.expect(")")
                if not self._at_expr_continuation():
                    return p
            except ParseError:
                pass
            self.i = save
        lhs = self.expr(scope, "predicate")
        t = self.tok
        if not (t.kind == "op" and t.value in CMP):
            self.error("expected a comparison operator", CMP)
        self.i += 1
        rhs = self.expr(scope, "predicate")
        return Compare(lhs, t.value, rhs)

    def _at_expr_continuation(self) -> bool:
        t = self.tok
        return t.kind == "op" and t.value in CMP + ("+", "-", "*", "/", "//", "%")

    # expressions
    def expr(self, scope, context):
        left = self.term_(scope, context)
        while self.at("+", "-"):
            op = self.tok.value
            self.i += 1
            left = BinOp(op, left, self.term_(scope, context))
        return left

    def term_(self, scope, context):
        left = self.factor(scope, context)
        while self.at("*", "/", "//", "%"):
            op = self.tok.value
            self.i += 1
            left = BinOp(op, left, self.factor(scope, context))
        return left

    def factor(self, scope, context):
        t = self.tok
        if self.accept("-"):
            n = self.tok
            if n.kind == "number":
                self.i += 1
                return Lit(-n.value)
            return Neg(self.factor(scope, context))
        if t.kind == "number" or t.kind == "string":
            self.i += 1
            return Lit(t.value)
        if self.accept("("):
            e = self.expr(scope, context)
            self.expect(")")
            return e
        if t.kind == "name":
            self.i += 1
            if self.at("(") and t.value in FUNCS:
                self.i += 1
                args = []
                if not self.at(")"):
                    args.append(self.expr(scope, context))
                    while self.accept(","):
                        args.append(self.expr(scope, context))
                self.expect(")")
                return Func(t.value, tuple(args))
            if t.value in scope:
                return Var(t.value)
            if context == "predicate":
                self.model.attribute_uses.setdefault(t.value, (t.line, t.col))
                return Attr(t.value)
            if context == "knowledge":
                return Var(t.value)
            raise ParseError(t.line, t.col, f"unbound variable {t.value!r}")
        got = "end of input" if t.kind == "eof" else repr(t.value)
        self.error(f"expected an expression, found {got}", ("<number>", "<string>", "<name>", "("))


def parse_model(text: str, strict: bool = True) -> ModelFile:
    """Parse a model file.

    With ``strict`` (the default) an attribute used in a predicate or defined
    by an interface but missing from the ``attributes`` declarations is a
    :class:`ParseError`; otherwise it is left for :func:`check_model`.
    """
    m = _Parser(text).model_file()
    if strict:
        declared = set(m.attributes) | {"id"}
        for attr, (line, col) in m.attribute_uses.items():
            if attr not in declared:
                raise ParseError(line, col, f"undeclared attribute {attr!r}")
    return m


def parse_process(text: str, scope=()) -> object:
    p = _Parser(text)
    proc = p.process(frozenset(scope))
    if p.tok.kind != "eof":
        p.error("unexpected trailing input")
    return proc


def parse_predicate(text: str, scope=()) -> object:
    p = _Parser(text)
    pred = p.predicate(frozenset(scope))
    if p.tok.kind != "eof":
        p.error("unexpected trailing input")
    return pred


# ---------------------------------------------------------------------------
# static checks

def _unguarded_calls(p) -> set[str]:
    if isinstance(p, (Choice, Par)):
        return _unguarded_calls(p.left) | _unguarded_calls(p.right)
    if isinstance(p, Call):
        return {p.name}
    return set()


def _walk(p):
    yield p
    if isinstance(p, Prefix):
        yield from _walk(p.cont)
    elif isinstance(p, (Choice, Par)):
        yield from _walk(p.left)
        yield from _walk(p.right)


def _free(p, bound: frozenset) -> set[str]:
    if isinstance(p, Prefix):
        a = p.action
        fv: set[str] = set()
        for f in a.fields:
            if not isinstance(f, Formal):
                fv |= expr_vars(f)
        if a.target is not SELF:
            fv |= pred_vars(a.target)
        return (fv - bound) | _free(p.cont, bound | set(a.binders))
    if isinstance(p, (Choice, Par)):
        return _free(p.left, bound) | _free(p.right, bound)
    if isinstance(p, Call):
        out: set[str] = set()
        for a in p.args:
            out |= expr_vars(a)
        return out - bound
    return set()


def check_model(m: ModelFile) -> list[Diagnostic]:
    """Static checks; an empty list means the model is well formed."""
    diags: list[Diagnostic] = []
    defs = m.definitions

    def pos(table, name):
        return m.positions.get((table, name), (1, 1))

    def err(line, col, msg):
        diags.append(Diagnostic(line, col, "error", msg))

    declared = set(m.attributes) | {"id"}

    def check_process(p, where, line, col, params=frozenset()):
        for q in _walk(p):
            if isinstance(q, Envelope):
                err(line, col, f"{where}: envelope terms are not allowed in user processes")
            if isinstance(q, Call):
                if q.name not in defs:
                    err(line, col, f"{where}: undefined process {q.name!r}")
                elif len(defs[q.name].params) != len(q.args):
                    err(line, col, f"{where}: {q.name} expects {len(defs[q.name].params)} "
                                   f"argument(s), got {len(q.args)}")
            if isinstance(q, Prefix) and q.action.target is not SELF:
                for a in sorted(pred_attrs(q.action.target) - declared):
                    err(line, col, f"{where}: undeclared attribute {a!r}")
        for v in sorted(_free(p, frozenset(params))):
            err(line, col, f"{where}: unbound variable {v!r}")

    # guardedness: no cycle through calls not under a prefix
    graph = {name: _unguarded_calls(d.body) & set(defs) for name, d in defs.items()}
    state: dict[str, int] = {}

    def visit(n, stack):
        state[n] = 1
        for k in sorted(graph[n]):
            if state.get(k) == 1:
                cycle = stack[stack.index(k):] + [k]
                line, col = pos("process", k)
                err(line, col, "unguarded recursion: " + " -> ".join(cycle))
            elif k not in state:
                visit(k, stack + [k])
        state[n] = 2

    for n in sorted(graph):
        if n not in state:
            visit(n, [n])

    for name, d in defs.items():
        line, col = pos("process", name)
        check_process(d.body, f"process {name}", line, col, frozenset(d.params))

    for name, iface in m.interfaces.items():
        line, col = pos("interface", name)
        for attr in iface.attributes:
            if attr not in declared:
                err(line, col, f"interface {name}: undeclared attribute {attr!r}")

    for name, r in m.repositories.items():
        try:
            make_repository(r.type, **r.params)
        except Exception as exc:  # noqa: BLE001
            err(r.line, r.col, f"repository {name}: {exc}")

    if not m.components:
        err(1, 1, "model declares no components")
    for c in m.components:
        where = f"component {c.name}"
        if c.count < 1:
            err(c.line, c.col, f"{where}: replication count must be positive")
        if isinstance(c.interface, str) and c.interface not in m.interfaces:
            err(c.line, c.col, f"{where}: unknown interface {c.interface!r}")
        if isinstance(c.interface, InterfaceDef):
            for attr in c.interface.attributes:
                if attr not in declared:
                    err(c.line, c.col, f"{where}: undeclared attribute {attr!r}")
        if c.repository is not None and c.repository not in m.repositories:
            err(c.line, c.col, f"{where}: unknown repository {c.repository!r}")
        for t in c.knowledge:
            for f in t:
                try:
                    eval_expr(f)
                except NotGround:
                    err(c.line, c.col, f"{where}: knowledge item {format_tuple(t)} is not ground")
                    break
                except Exception:  # noqa: BLE001
                    err(c.line, c.col, f"{where}: cannot evaluate knowledge item {format_tuple(t)}")
                    break
        check_process(c.process, where, c.line, c.col)
    return diags


# ---------------------------------------------------------------------------
# building runtime systems

class ModelError(ValueError):
    pass


def build(m: ModelFile):
    """Instantiate the initial system and definitions of a checked model."""
    repos = {name: make_repository(r.type, **r.params) for name, r in m.repositories.items()}
    default_repo = make_repository("tuplespace")
    comps = []
    for decl in m.components:
        if isinstance(decl.interface, InterfaceDef):
            iface = decl.interface
        elif decl.interface is None:
            iface = InterfaceDef(decl.name)
        else:
            try:
                iface = m.interfaces[decl.interface]
            except KeyError:
                raise ModelError(f"unknown interface {decl.interface!r}") from None
        repo = repos[decl.repository] if decl.repository is not None else default_repo
        kind = ComponentKind(decl.name, iface, repo)
        k = KnowledgeState(tuple(eval_expr(f) for f in t) for t in decl.knowledge)
        c = Component(kind, k, decl.process)
        comps.extend([c] * decl.count)
    return tuple(comps), m.definitions


# ---------------------------------------------------------------------------
# printing

def format_value(v) -> str:
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v)


def format_expr(e) -> str:
    if isinstance(e, Lit):
        return format_value(e.value)
    if isinstance(e, (Var, Attr)):
        return e.name
    if isinstance(e, Neg):
        return f"-({format_expr(e.operand)})"
    if isinstance(e, BinOp):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    if isinstance(e, Func):
        return f"{e.name}({', '.join(format_expr(a) for a in e.args)})"
    raise TypeError(e)


def format_pred(p) -> str:
    if isinstance(p, TT):
        return "tt"
    if isinstance(p, Compare):
        return f"{format_expr(p.lhs)} {p.op} {format_expr(p.rhs)}"
    if isinstance(p, Not):
        return f"!({format_pred(p.operand)})"
    if isinstance(p, And):
        return f"({format_pred(p.left)}) && ({format_pred(p.right)})"
    raise TypeError(p)


def format_field(f) -> str:
    return f"?{f.name}" if isinstance(f, Formal) else format_expr(f)


def format_tuple(fields) -> str:
    return "<" + ", ".join(format_field(f) for f in fields) + ">"


def format_action(a: Action) -> str:
    target = "self" if a.target is SELF else f"({format_pred(a.target)})"
    return f"{a.kind}({format_tuple(a.fields)})@{target}"


def format_process(p) -> str:
    if isinstance(p, Nil):
        return "nil"
    if isinstance(p, Prefix):
        return f"{format_action(p.action)}.{_operand(p.cont, (Choice, Par))}"
    if isinstance(p, Choice):
        return f"{_operand(p.left, (Par,))} + {_operand(p.right, (Choice, Par))}"
    if isinstance(p, Par):
        return f"{format_process(p.left)} | {_operand(p.right, (Par,))}"
    if isinstance(p, Call):
        if not p.args:
            return p.name
        return f"{p.name}({', '.join(format_expr(a) for a in p.args)})"
    if isinstance(p, Envelope):
        return f"[{format_tuple(tuple(Lit(v) for v in p.item))}|{format_pred(p.predicate)}|{p.rate!r}]"
    raise TypeError(p)


def _operand(p, wrap) -> str:
    s = format_process(p)
    return f"({s})" if isinstance(p, wrap) else s


def _format_extraction(x) -> str:
    if isinstance(x, FieldOf):
        return f"field({format_value(x.tag)}, {x.index})"
    if isinstance(x, CountOf):
        return f"count({format_value(x.tag)})"
    return _format_literal(x.value)


def _format_literal(v) -> str:
    if isinstance(v, list):
        return "[" + ", ".join(_format_literal(x) for x in v) + "]"
    return format_value(v)


def _format_interface_body(iface: InterfaceDef, indent: str) -> str:
    lines = [f"{indent}    {a} = {_format_extraction(x)};" for a, x in iface.rules]
    return "{\n" + "\n".join(lines) + ("\n" if lines else "") + indent + "}"


def format_model(m: ModelFile) -> str:
    out = []
    if m.attributes:
        out.append("attributes " + ", ".join(m.attributes) + ";")
    if m.rates:
        out.append(f"rates {format_value(m.rates)};")
    for r in m.repositories.values():
        params = ", ".join(f"{k} = {_format_literal(v)}" for k, v in r.params.items())
        out.append(f"repository {r.name} = {r.type}({params});")
    for name, iface in m.interfaces.items():
        out.append(f"interface {name} {_format_interface_body(iface, '')}")
    for d in m.definitions.values():
        params = f"({', '.join(d.params)})" if d.params else ""
        out.append(f"proc {d.name}{params} = {format_process(d.body)};")
    for c in m.components:
        count = f" * {c.count}" if c.count != 1 else ""
        body = []
        if isinstance(c.interface, InterfaceDef):
            body.append(f"    interface {_format_interface_body(c.interface, '    ')}")
        elif c.interface is not None:
            body.append(f"    interface {c.interface};")
        if c.repository is not None:
            body.append(f"    repository {c.repository};")
        if c.knowledge:
            body.append("    knowledge { " + ", ".join(format_tuple(t) for t in c.knowledge) + " }")
        body.append(f"    process {format_process(c.process)};")
        out.append(f"component {c.name}{count} {{\n" + "\n".join(body) + "\n}")
    return "\n".join(out) + "\n"


def format_component(c) -> str:
    items = ", ".join(format_tuple(tuple(Lit(v) for v in t)) + (f"^{n}" if n > 1 else "")
                      for t, n in c.knowledge.entries)
    s = f"{c.name}{{{items}}}[{format_process(c.process)}]"
    if c.envelopes:
        s += "+" + "+".join(format_process(env) for env in c.envelopes)
    return s


def format_state(system) -> str:
    """One-line rendering of a flat system state."""
    return " || ".join(format_component(c) for c in system)
