import pytest

from stocs import RateConfig
from stocs.actor import EnvDeliver, InputPut, OutEnv, OutPut, OutputPut
from stocs.ctmc import build_ctmc, transient
from stocs.futs import EMPTY, ContinuationFunction, char, point, total_mass
from stocs.knowledge import KnowledgeState
from stocs.netor import NetOr, attach, make_semantics
from stocs.syntax import parse_predicate
from stocs.terms import NIL, SELF, Envelope, Definitions

import models

P = parse_predicate('role == "r"')
RATES = {"default_rate": 1.0, "rates": [{"kind": "envelope", "rate": 2.0}]}


def test_envelope_fires_on_its_label():
    s = NetOr(Definitions(), RateConfig())
    env = Envelope(("m",), P, 2.0)
    assert s.envelope_step(env, OutEnv(("m",), P)) == point(NIL, 2.0)


@pytest.mark.parametrize("alpha", [OutPut(("m",), P), OutEnv(("n",), P),
                                   OutEnv(("m",), parse_predicate("x > 1"))])
def test_envelope_blocked_otherwise(alpha):
    s = NetOr(Definitions(), RateConfig())
    assert s.envelope_step(Envelope(("m",), P, 2.0), alpha) == EMPTY


def test_input_attaches_envelope_without_checking_predicate():
    (snd, recv), s = models.load(models.TWO_PUT, RATES, "net-or")
    other = recv.with_(kind=snd.kind)  # does not satisfy the predicate
    for c in (recv, other):
        f = s.component_step(c, InputPut(s.evaluation(snd), ("m",), P))
        assert f == char(attach(c, Envelope(("m",), P, 2.0)))


def test_input_with_loss():
    (snd, recv), s = models.load(models.TWO_PUT, {**RATES, **models.LOSSY}, "net-or")
    f = s.component_step(recv, InputPut(s.evaluation(snd), ("m",), P))
    assert f == ContinuationFunction({recv: 0.1, attach(recv, Envelope(("m",), P, 2.0)): 0.9})


def test_delivery_accepts_when_satisfied():
    (snd, recv), s = models.load(models.TWO_PUT, RATES, "net-or")
    pending = attach(recv, Envelope(("m",), P, 2.0))
    f = s.component_step(pending, EnvDeliver(("m",), P))
    assert f == point(recv.with_(knowledge=KnowledgeState([("m",)])), 2.0)


def test_delivery_refuses_when_violated():
    (snd, recv), s = models.load(models.TWO_PUT, RATES, "net-or")
    other = recv.with_(kind=snd.kind)
    pending = attach(other, Envelope(("m",), P, 2.0))
    assert s.component_step(pending, EnvDeliver(("m",), P)) == point(other, 2.0)


def test_two_phase_dynamics():
    (snd, recv), s = models.load(models.TWO_PUT, RATES, "net-or")
    ((label, f),) = s.enabled_transitions((snd, recv))
    assert isinstance(label, OutputPut)
    shipped = (snd.with_(process=NIL), attach(recv, Envelope(("m",), P, 2.0)))
    assert f == point(shipped, 1.0)
    ((label2, g),) = s.enabled_transitions(shipped)
    assert isinstance(label2, EnvDeliver)
    assert g == point((snd.with_(process=NIL), recv.with_(knowledge=KnowledgeState([("m",)]))), 2.0)


def test_sender_continues_while_envelope_pending():
    src = models.TWO_PUT.replace('put(<"m">)@(role == "r").nil', 'put(<"m">)@(role == "r").put(<"x">)@self.nil')
    (snd, recv), s = models.load(src, RATES, "net-or")
    ((_, f),) = s.enabled_transitions((snd, recv))
    (mid,) = f.support
    labels = {type(l).__name__ for l, _ in s.enabled_transitions(mid)}
    assert labels == {"EnvDeliver", "SyncPutSelf"}


def test_predicate_flip_between_phases():
    sys_, s = models.load(models.FLIP, None, "net-or")
    c = build_ctmc(sys_, s)
    # a receiver that switched off before delivery never holds the message
    final = [st for st in c.states if not any(x.envelopes for x in st) and st[0].process == NIL
             and st[1].process == NIL]
    got = {st[1].knowledge.count(("m",)) for st in final}
    assert got == {0, 1}
    for st in c.states:
        if st[1].knowledge.count(("m",)):
            # delivered only while the receiver was on
            assert st[1].knowledge.count(("on",)) == 1 or st[1].process == NIL


def test_envelopes_are_conserved():
    sys_, s = models.load(models.TWO_PUT, {**RATES, **models.LOSSY}, "net-or")
    c = build_ctmc(sys_, s)
    for i, st in enumerate(c.states):
        for j, rate, label in c.transitions[i]:
            before = sum(len(x.envelopes) for x in st)
            after = sum(len(x.envelopes) for x in c.states[j])
            if isinstance(label, EnvDeliver):
                assert after == before - 1
            elif isinstance(label, OutputPut):
                assert after - before in (0, 1)
            else:
                assert after == before


def test_state_count_exceeds_actor():
    a = build_ctmc(*models.load(models.TWO_PUT, models.LOSSY, "act-or"))
    n = build_ctmc(*models.load(models.TWO_PUT, models.LOSSY, "net-or"))
    assert (a.n, n.n) == (3, 4)


@pytest.mark.parametrize("p_err", [0.0, 0.1, 0.5])
def test_delivery_probability_is_one_minus_loss(p_err):
    rates = {"errors": [{"kind": "put", "prob": p_err}]}
    c = build_ctmc(*models.load(models.TWO_PUT, rates, "net-or"))
    pi = transient(c, 60.0, 1e-10)
    delivered = sum(p for st, p in zip(c.states, pi) if st[1].knowledge.count(("m",)))
    assert delivered == pytest.approx(1 - p_err, abs=1e-6)


def test_semantics_names():
    assert make_semantics("act-or", Definitions()).label == "act-or"
    assert make_semantics("net-or", Definitions()).label == "net-or(put)+act-or(gq)"
    with pytest.raises(ValueError):
        make_semantics("int-or", Definitions())
