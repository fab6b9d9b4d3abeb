"""Network-oriented (net-or) semantics for put.

A put towards a predicate is split in two timed phases. Shipping (rate from
the put rule) attaches an envelope to every other component, lost with the
loss probability; delivery (rate ``mu`` frozen in the envelope) checks the
predicate against the receiver *at arrival* and updates its knowledge or
discards the message. get/qry keep the act-or single-step rules.
"""
from __future__ import annotations

from .actor import ActOr, EnvDeliver, InputPut, OutEnv
from .futs import EMPTY, ContinuationFunction, add, char, pair, point
from .knowledge import item_key
from .rates import ActionDescriptor
from .terms import Component, Envelope, Nil, par


def _env_key(env: Envelope):
    return (item_key(env.item), repr(env.predicate), env.rate)


def attach(c: Component, env: Envelope) -> Component:
    return c.with_(envelopes=tuple(sorted(c.envelopes + (env,), key=_env_key)))


def detach(c: Component, index: int) -> Component:
    return c.with_(envelopes=c.envelopes[:index] + c.envelopes[index + 1:])


class NetOr(ActOr):
    name = "net-or"
    #: get/qry fall back to act-or rules
    label = "net-or(put)+act-or(gq)"

    def input_put(self, c: Component, label: InputPut, e) -> ContinuationFunction:
        # shipping does not check the predicate; the envelope carries it to delivery time
        mu = self.rates.rate(label.src, ActionDescriptor("envelope", label.item, label.predicate), e)
        p_err = self.rates.loss_probability(label.src, ActionDescriptor("put", label.item, label.predicate), e)
        shipped = attach(c, Envelope(label.item, label.predicate, mu))
        return add(point(c, p_err), point(shipped, 1.0 - p_err))

    def envelope_continuation(self, c: Component, label: EnvDeliver) -> ContinuationFunction:
        """Process-level continuation of ``P | envelopes`` on an envelope label."""
        alpha = OutEnv(label.item, label.predicate)
        m: dict = {}
        for idx, env in enumerate(c.envelopes):
            f = self.envelope_step(env, alpha)
            for rest, v in f.items():
                # interleaved with the host process, then nil | Q = Q
                remaining = detach(c, idx)
                if not isinstance(rest, Nil):
                    remaining = remaining.with_(process=par(c.process, rest))
                m[remaining] = m.get(remaining, 0.0) + v
        return ContinuationFunction(m)

    def component_step_other(self, c: Component, label) -> ContinuationFunction:
        if type(label) is not EnvDeliver:
            return EMPTY
        procs = self.envelope_continuation(c, label)
        if not procs:
            return EMPTY
        if self.sat(self.evaluation(c), label.predicate):
            # receiver satisfies the predicate on arrival
            pi = c.kind.repository.oplus(c.knowledge, label.item)
        else:
            # receiver refuses; the envelope is consumed
            pi = char(c.knowledge)
        return pair(pi, procs, lambda k, host: host.with_(knowledge=k))

    def _extra_transitions(self, system, i, out):
        c = system[i]
        seen: dict = {}
        for env in c.envelopes:
            seen[(env.item, env.predicate)] = None
        for item, pred in seen:
            label = EnvDeliver(item, pred)
            f = self.component_step(c, label)
            if f:
                out.append((label, [(i, f)]))


def make_semantics(name: str, defs, rates=None) -> ActOr:
    if name in ("act-or", "actor", "act"):
        return ActOr(defs, rates)
    if name in ("net-or", "netor", "net"):
        return NetOr(defs, rates)
    raise ValueError(f"unknown semantics {name!r}; expected act-or or net-or")
