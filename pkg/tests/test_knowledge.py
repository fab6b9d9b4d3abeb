from collections import Counter
from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from stocs.futs import char, total_mass
from stocs.knowledge import KnowledgeState, TupleSpace, make_repository, match
from stocs.knowledge import infer, ominus, oplus
from stocs.terms import Formal

X = Formal("x")
items = st.tuples(st.sampled_from(["a", "b"]), st.integers(0, 3))
spaces = st.lists(items, max_size=8).map(KnowledgeState)


def test_match():
    assert match(("go", X), ("go", 3)) == {"x": 3}
    assert match(("go", X), ("stop", 3)) is None
    assert match(("go", X), ("go", 3, 4)) is None
    assert match((X, X), (1, 1)) == {"x": 1}
    assert match((X, X), (1, 2)) is None
    assert match(("a",), ("a",)) == {}


def test_oplus_is_dirac_insertion():
    k = KnowledgeState()
    assert oplus(k, ("b",)) == char(KnowledgeState([("b",)]))
    k1 = KnowledgeState([("b",)])
    f = oplus(k1, ("b",))
    (k2,) = f.support
    assert k2.count(("b",)) == 2


def test_ominus_absent_is_undefined():
    assert ominus(KnowledgeState(), ("bike",)) is None
    assert infer(KnowledgeState([("a", 1)]), ("b", X)) is None


def test_ominus_uniform_over_occurrences():
    k = KnowledgeState([("a", 1), ("a", 2)])
    f = ominus(k, ("a", X))
    assert f((KnowledgeState([("a", 2)]), ("a", 1))) == pytest.approx(0.5)
    assert f((KnowledgeState([("a", 1)]), ("a", 2))) == pytest.approx(0.5)


def test_ominus_weights_by_multiplicity():
    k = KnowledgeState([("a", 1), ("a", 1), ("a", 2)])
    f = ominus(k, ("a", X))
    assert f((KnowledgeState([("a", 1), ("a", 2)]), ("a", 1))) == pytest.approx(2 / 3)


def test_infer_leaves_knowledge_unchanged():
    k = KnowledgeState([("a", 1), ("b", 5)])
    assert infer(k, ("b", X)) == char(("b", 5))


@given(spaces, st.sampled_from(["a", "b"]))
def test_ominus_brute_force(k, tag):
    f = ominus(k, (tag, X))
    occurrences = [t for t, n in k.counts().items() for _ in range(n) if t[0] == tag]
    # each occurrence, enumerated separately, carries 1/n
    expect = Counter()
    for t in occurrences:
        expect[(k.remove(t), t)] += 1 / len(occurrences) if occurrences else 0
    if not occurrences:
        assert f is None
        return
    assert total_mass(f) == pytest.approx(1.0, abs=1e-12)
    for key, v in expect.items():
        assert f(key) == pytest.approx(v, rel=1e-12)


@given(spaces, items)
def test_add_then_remove_roundtrips(k, t):
    assert k.add(t).remove(t) == k


@given(st.permutations([("a", 1), ("a", 1), ("b", 2), ("b", 3)]))
def test_canonical_order_independent(xs):
    assert KnowledgeState(xs) == KnowledgeState([("a", 1), ("a", 1), ("b", 2), ("b", 3)])
    assert hash(KnowledgeState(xs)) == hash(KnowledgeState(sorted(xs)))


def test_mixed_field_types_are_canonical():
    a = KnowledgeState([("x", 1), ("x", "s"), ("x", 2.5)])
    b = KnowledgeState([("x", 2.5), ("x", "s"), ("x", 1)])
    assert a == b


def test_repository_registry():
    assert isinstance(make_repository("tuplespace"), TupleSpace)
    with pytest.raises(Exception):
        make_repository("no_such_repository")


def test_remove_absent_raises():
    with pytest.raises(Exception):
        KnowledgeState().remove(("a",))


def test_all_matches_for_every_arity():
    k = KnowledgeState([("a",), ("a", 1), ("a", 1, 2)])
    for n in range(1, 4):
        tmpl = ("a",) + tuple(Formal(f"v{i}") for i in range(n - 1))
        f = ominus(k, tmpl)
        assert len(f) == 1


@pytest.mark.parametrize("fields", list(product(["a", "b"], [0, 1])))
def test_ominus_then_oplus_restores(fields):
    k = KnowledgeState([fields, ("c", 9)])
    f = ominus(k, fields)
    ((k2, t),) = f.support
    assert oplus(k2, t) == char(k)
