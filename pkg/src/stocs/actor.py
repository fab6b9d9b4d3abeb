"""Action-oriented (act-or) operational semantics.

Three layers, each producing continuation functions:

* processes: ``process_step(P, alpha, e)`` over process labels;
* components: put rules (local, output, input with loss, input refusal) and
  get/qry rules (local, output, responder input);
* systems: broadcast composition of put outputs with the inputs of every
  other component, unicast race for get/qry, interleaving for local actions.

A system is a flat tuple of components; the binary synchronisation rules are
applied over list decompositions, which makes parallel composition
associative by construction.
"""
from __future__ import annotations

from typing import Any

from .futs import EMPTY, ContinuationFunction, add, char, pair, point, scale
from .interface import Evaluation, evaluate, satisfies
from .knowledge import match
from .rates import ActionDescriptor, RateConfig
from .terms import (GET, NIL, PUT, QRY, SELF, Action, Call, Choice, Component,
                    Definitions, Envelope, Nil, NotGround, Par, Prefix, ground_payload,
                    par, substitute, term)

# ---------------------------------------------------------------------------
# labels


@term
class OutPut:
    """Process output ``put(t)@c``."""
    item: tuple
    target: Any


@term
class OutGq:
    """Process output ``dst: gq(T:t)@c`` for gq in {get, qry}."""
    kind: str
    dst: Any
    template: tuple
    item: tuple
    target: Any


@term
class OutEnv:
    """Process output of an envelope ``|t|_p`` (net-or)."""
    item: tuple
    predicate: Any


@term
class InputPut:
    src: Any
    item: tuple
    predicate: Any


@term
class OutputPut:
    src: Any
    item: tuple
    predicate: Any


@term
class SyncPutSelf:
    src: Any
    item: tuple


@term
class InputGq:
    src: Any
    kind: str
    template: tuple
    item: tuple
    predicate: Any


@term
class OutputGq:
    src: Any
    dst: Any
    kind: str
    template: tuple
    item: tuple
    predicate: Any


@term
class SyncGq:
    src: Any
    kind: str
    template: tuple
    item: tuple
    target: Any


@term
class EnvDeliver:
    """Delivery of a pending envelope at its host component (net-or)."""
    item: tuple
    predicate: Any


PUT_LABELS = (InputPut, OutputPut, SyncPutSelf)
GQ_LABELS = (InputGq, OutputGq, SyncGq)
#: labels that are transitions of the complete (closed) system
CLOSED_LABELS = (OutputPut, SyncPutSelf, SyncGq, EnvDeliver)


class UnguardedRecursion(RuntimeError):
    pass


def lift(system: tuple, i: int, f: ContinuationFunction) -> ContinuationFunction:
    """Lift a continuation over component ``i`` to one over the whole system."""
    head, tail = system[:i], system[i + 1:]
    return f.map_states(lambda c: head + (c,) + tail)


def _is_identity(f: ContinuationFunction, c) -> bool:
    return len(f) == 1 and f(c) == 1.0


def product(system: tuple, parts) -> ContinuationFunction:
    """Independent combination of per-component continuations.

    ``parts`` is a sequence of ``(index, continuation)`` with distinct
    indices; components not listed stay unchanged (weight 1). This realises
    pairing over the list decomposition of the system.
    """
    partial: list[tuple[dict, float]] = [({}, 1.0)]
    for i, f in parts:
        if not f:
            return EMPTY
        if _is_identity(f, system[i]):
            continue
        nxt = []
        for assign, w in partial:
            for c, v in f.items():
                a = dict(assign)
                a[i] = c
                nxt.append((a, w * v))
        partial = nxt
    m: dict = {}
    for assign, w in partial:
        if assign:
            s = list(system)
            for i, c in assign.items():
                s[i] = c
            s = tuple(s)
        else:
            s = system
        m[s] = m.get(s, 0.0) + w
    return ContinuationFunction(m)


class ActOr:
    """act-or semantics for a fixed set of definitions and rate configuration.

    All results are pure functions of their arguments and are memoised.
    """

    name = "act-or"
    label = "act-or"

    def __init__(self, defs: Definitions, rates: RateConfig | None = None):
        self.defs = defs
        self.rates = rates if rates is not None else RateConfig()
        self._eval: dict = {}
        self._sat: dict = {}
        self._pstep: dict = {}
        self._actions: dict = {}
        self._cstep: dict = {}
        self._unfold: dict = {}
        self._retr: dict = {}
        self._local: dict = {}

    def __getstate__(self):
        return {"defs": self.defs, "rates": self.rates}

    def __setstate__(self, state):
        self.__init__(state["defs"], state["rates"])

    def clear_caches(self):
        for c in (self._eval, self._sat, self._pstep, self._actions, self._cstep, self._unfold,
                  self._retr, self._local):
            c.clear()

    def _trim(self):
        # keep memory bounded on long simulations
        for c in (self._pstep, self._cstep, self._sat, self._retr, self._local):
            if len(c) > 400_000:
                c.clear()

    # -- interfaces -------------------------------------------------------

    def evaluation(self, c: Component) -> Evaluation:
        key = (c.kind, c.knowledge)
        e = self._eval.get(key)
        if e is None:
            e = evaluate(c.kind.interface, c.knowledge, c.kind.name)
            self._eval[key] = e
        return e

    def sat(self, e: Evaluation, p) -> bool:
        key = (e, p)
        r = self._sat.get(key)
        if r is None:
            r = satisfies(e, p)
            self._sat[key] = r
        return r

    # -- processes ---------------------------------------------------------

    def unfold(self, p: Call):
        r = self._unfold.get(p)
        if r is None:
            r = self.defs.unfold(p)
            self._unfold[p] = r
        return r

    def actions(self, p) -> tuple:
        """Distinct ``(action, ground payload)`` pairs offered by ``p``."""
        r = self._actions.get(p)
        if r is None:
            found: dict = {}
            self._collect(p, found, ())
            r = tuple(found)
            self._actions[p] = r
        return r

    def _collect(self, p, found: dict, active: tuple):
        if isinstance(p, Prefix):
            try:
                payload = ground_payload(p.action)
            except NotGround:
                return
            found[(p.action.kind, payload, p.action.target)] = None
        elif isinstance(p, (Choice, Par)):
            self._collect(p.left, found, active)
            self._collect(p.right, found, active)
        elif isinstance(p, Call):
            if p in active:
                raise UnguardedRecursion(p.name)
            self._collect(self.unfold(p), found, active + (p,))

    def process_step(self, p, alpha, e) -> ContinuationFunction:
        """Continuation of process ``p`` on label ``alpha`` in a component with evaluation ``e``."""
        key = (p, alpha, e)
        r = self._pstep.get(key)
        if r is None:
            r = self._process_step(p, alpha, e)
            self._pstep[key] = r
        return r

    def _process_step(self, p, alpha, e) -> ContinuationFunction:
        if isinstance(p, Prefix):
            a: Action = p.action
            try:
                payload = ground_payload(a)
            except NotGround:
                return EMPTY
            if a.kind == PUT:
                # fires only on its own output label
                if type(alpha) is OutPut and alpha.item == payload and alpha.target == a.target:
                    lam = self.rates.rate(e, ActionDescriptor(PUT, payload, a.target), None)
                    return point(p.cont, lam)
                return EMPTY
            # fires on its own output label when the item matches
            if (type(alpha) is OutGq and alpha.kind == a.kind and alpha.template == payload
                    and alpha.target == a.target):
                theta = match(payload, alpha.item)
                if theta is None:
                    return EMPTY
                lam = self.rates.rate(
                    e, ActionDescriptor(a.kind, alpha.item, a.target, payload), alpha.dst)
                return point(substitute(p.cont, theta), lam)
            return EMPTY
        if isinstance(p, Nil):
            return EMPTY
        if isinstance(p, Choice):
            # choice sums
            return add(self.process_step(p.left, alpha, e), self.process_step(p.right, alpha, e))
        if isinstance(p, Call):
            # unfold the definition
            return self.process_step(self.unfold(p), alpha, e)
        if isinstance(p, Par):
            # interleaving
            left = self.process_step(p.left, alpha, e)
            right = self.process_step(p.right, alpha, e)
            return add(pair(left, char(p.right), par), pair(char(p.left), right, par))
        if isinstance(p, Envelope):
            return self.envelope_step(p, alpha)
        raise TypeError(f"not a process: {p!r}")

    def envelope_step(self, env: Envelope, alpha) -> ContinuationFunction:
        # an envelope fires only on its own label
        if type(alpha) is OutEnv and alpha.item == env.item and alpha.predicate == env.predicate:
            return point(NIL, env.rate)
        return EMPTY

    # -- knowledge ---------------------------------------------------------

    def retrieve(self, c: Component, kind: str, template: tuple):
        """Distribution over ``(knowledge', item)`` for get, or ``(knowledge, item)`` for qry."""
        key = (c.kind.repository, c.knowledge, kind, template)
        try:
            return self._retr[key]
        except KeyError:
            pass
        r = self._retrieve(c, kind, template)
        self._retr[key] = r
        return r

    def _retrieve(self, c: Component, kind: str, template: tuple):
        repo = c.kind.repository
        if kind == GET:
            return repo.ominus(c.knowledge, template)
        pi = repo.infer(c.knowledge, template)
        if pi is None:
            return None
        return ContinuationFunction({(c.knowledge, t): v for t, v in pi.items()})

    @staticmethod
    def _restrict(pi: ContinuationFunction, item) -> ContinuationFunction:
        """Knowledge distribution jointly with yielding exactly ``item``."""
        m: dict = {}
        for (k, t), v in pi.items():
            if t == item:
                m[k] = m.get(k, 0.0) + v
        return ContinuationFunction(m)

    # -- components --------------------------------------------------------

    def component_step(self, c: Component, label) -> ContinuationFunction:
        key = (c, label)
        r = self._cstep.get(key)
        if r is None:
            if isinstance(label, PUT_LABELS):
                r = self.component_step_put(c, label)
            elif isinstance(label, GQ_LABELS):
                r = self.component_step_gq(c, label)
            else:
                r = self.component_step_other(c, label)
            self._cstep[key] = r
        return r

    def component_step_other(self, c: Component, label) -> ContinuationFunction:
        return EMPTY

    def component_step_put(self, c: Component, label) -> ContinuationFunction:
        e = self.evaluation(c)
        if type(label) is SyncPutSelf:
            # local put: update knowledge and process together
            if label.src != e:
                return EMPTY
            procs = self.process_step(c.process, OutPut(label.item, SELF), e)
            if not procs:
                return EMPTY
            pi = c.kind.repository.oplus(c.knowledge, label.item)
            return pair(pi, procs, lambda k, p: c.with_(knowledge=k, process=p))
        if type(label) is OutputPut:
            # put output: knowledge unchanged
            if label.src != e:
                return EMPTY
            procs = self.process_step(c.process, OutPut(label.item, label.predicate), e)
            return procs.map_states(lambda p: c.with_(process=p))
        if type(label) is InputPut:
            return self.input_put(c, label, e)
        return EMPTY

    def input_put(self, c: Component, label: InputPut, e: Evaluation) -> ContinuationFunction:
        if not self.sat(e, label.predicate):
            # refused input: unchanged with probability 1
            return char(c)
        # accepted input, lost with probability p_err
        a = ActionDescriptor(PUT, label.item, label.predicate)
        p_err = self.rates.loss_probability(label.src, a, e)
        pi = c.kind.repository.oplus(c.knowledge, label.item)
        updated = pi.map_states(lambda k: c.with_(knowledge=k))
        return add(point(c, p_err), scale(updated, 1.0 - p_err))

    def component_step_gq(self, c: Component, label) -> ContinuationFunction:
        e = self.evaluation(c)
        if type(label) is SyncGq:
            # local get/qry at self
            if label.target is not SELF or label.src != e:
                return EMPTY
            procs = self.process_step(
                c.process, OutGq(label.kind, e, label.template, label.item, SELF), e)
            if not procs:
                return EMPTY
            pi = self.retrieve(c, label.kind, label.template)
            if pi is None:
                return EMPTY
            rho = self._restrict(pi, label.item)
            return pair(rho, procs, lambda k, p: c.with_(knowledge=k, process=p))
        if type(label) is OutputGq:
            if label.src != e:
                return EMPTY
            procs = self.process_step(
                c.process, OutGq(label.kind, label.dst, label.template, label.item, label.predicate), e)
            return procs.map_states(lambda p: c.with_(process=p))
        if type(label) is InputGq:
            # responder: no refusal branch, absent from the race when not eligible
            if not self.sat(e, label.predicate):
                return EMPTY
            pi = self.retrieve(c, label.kind, label.template)
            if pi is None:
                return EMPTY
            return self._restrict(pi, label.item).map_states(lambda k: c.with_(knowledge=k))
        return EMPTY

    # -- systems -----------------------------------------------------------

    def system_step(self, system: tuple, label) -> ContinuationFunction:
        """Continuation of a flat system on ``label`` (any system-level label)."""
        n = len(system)
        evals = [self.evaluation(c) for c in system]
        if type(label) is OutputPut:
            # broadcast: one output, all others input; summed over the output position
            inp = InputPut(label.src, label.item, label.predicate)
            total: dict = {}
            for i in range(n):
                out = self.component_step(system[i], label)
                if not out:
                    continue
                parts = [(i, out)] + [(j, self.component_step(system[j], inp)) for j in range(n) if j != i]
                total = _accumulate(total, product(system, parts))
            return ContinuationFunction(total)
        if type(label) is InputPut:
            # input: every component inputs
            return product(system, [(j, self.component_step(system[j], label)) for j in range(n)])
        if type(label) is SyncGq and label.target is not SELF:
            total = {}
            for i in range(n):
                if evals[i] != label.src:
                    continue
                for j in range(n):
                    if j == i:
                        continue
                    out = self.component_step(system[i], OutputGq(
                        label.src, evals[j], label.kind, label.template, label.item, label.target))
                    if not out:
                        continue
                    inp = self.component_step(system[j], InputGq(
                        label.src, label.kind, label.template, label.item, label.target))
                    total = _accumulate(total, product(system, [(i, out), (j, inp)]))
            return ContinuationFunction(total)
        # local synchronisations and open labels interleave
        total = {}
        for i in range(n):
            f = self.component_step(system[i], label)
            if f:
                total = _accumulate(total, lift(system, i, f))
        return ContinuationFunction(total)

    def enabled_transitions(self, system: tuple) -> list[tuple[Any, ContinuationFunction]]:
        """Every closed-system label with a non-empty continuation, merged by label."""
        out: dict = {}
        for label, parts in self.moves(system):
            _merge(out, label, product(system, parts))
        return list(out.items())

    def moves(self, system: tuple) -> list[tuple[Any, list]]:
        """Closed-system transitions in factored form.

        Each entry is ``(label, parts)`` where ``parts`` lists ``(index,
        continuation)`` for the components taking part; the system-level
        continuation is their :func:`product`. Entries with the same label
        add up.
        """
        self._trim()
        n = len(system)
        evals = [self.evaluation(c) for c in system]
        out: list = []
        for i, c in enumerate(system):
            e = evals[i]
            for label, f in self.local_moves(c):
                out.append((label, [(i, f)]))
            for kind, payload, target in self.actions(c.process):
                if target is SELF:
                    continue
                if kind == PUT:
                    label = OutputPut(e, payload, target)
                    o = self.component_step(c, label)
                    if not o:
                        continue
                    inp = InputPut(e, payload, target)
                    parts = [(i, o)]
                    for j in range(n):
                        if j != i:
                            f = self.component_step(system[j], inp)
                            if not _is_identity(f, system[j]):
                                parts.append((j, f))
                    out.append((label, parts))
                else:
                    for j in range(n):
                        if j == i or not self.sat(evals[j], target):
                            continue
                        pi = self.retrieve(system[j], kind, payload)
                        if pi is None:
                            continue
                        for item in _items(pi):
                            o = self.component_step(c, OutputGq(e, evals[j], kind, payload, item, target))
                            if not o:
                                continue
                            r = self.component_step(system[j], InputGq(e, kind, payload, item, target))
                            if not r:
                                continue
                            out.append((SyncGq(e, kind, payload, item, target), [(i, o), (j, r)]))
            self._extra_transitions(system, i, out)
        return out

    def local_moves(self, c: Component) -> tuple:
        """``(label, continuation)`` of the put/get/qry actions of ``c`` at ``self``."""
        r = self._local.get(c)
        if r is not None:
            return r
        e = self.evaluation(c)
        found = []
        for kind, payload, target in self.actions(c.process):
            if target is not SELF:
                continue
            if kind == PUT:
                label = SyncPutSelf(e, payload)
                f = self.component_step(c, label)
                if f:
                    found.append((label, f))
                continue
            pi = self.retrieve(c, kind, payload)
            if pi is None:
                continue
            for item in _items(pi):
                label = SyncGq(e, kind, payload, item, SELF)
                f = self.component_step(c, label)
                if f:
                    found.append((label, f))
        r = tuple(found)
        self._local[c] = r
        return r

    def _extra_transitions(self, system, i, out):
        pass

    def exit_rate(self, system: tuple) -> float:
        return sum(sum(f.values()) for _, f in self.enabled_transitions(system))


def _items(pi: ContinuationFunction) -> list:
    seen: dict = {}
    for (_, t) in pi:
        seen[t] = None
    return list(seen)


def _accumulate(total: dict, f: ContinuationFunction) -> dict:
    for s, v in f.items():
        total[s] = total.get(s, 0.0) + v
    return total


def _merge(out: dict, label, f: ContinuationFunction):
    if not f:
        return
    prev = out.get(label)
    out[label] = f if prev is None else add(prev, f)
