from hypothesis import given
from hypothesis import strategies as st

from stocs.interface import Const, CountOf, FieldOf, InterfaceDef, evaluate, satisfies
from stocs.knowledge import KnowledgeState
from stocs.syntax import parse_predicate
from stocs.terms import TT, And, Attr, Compare, Lit, Not

STATION = InterfaceDef("Station", (("kind", Const("station")), ("bikes", FieldOf("station", 1)),
                                   ("res", CountOf("res"))))


def test_evaluate_fields_and_counts():
    k = KnowledgeState([("station", 5, 0), ("res",), ("res",)])
    e = evaluate(STATION, k, "p0")
    assert e == {"kind": "station", "bikes": 5, "res": 2, "id": "p0"}


def test_missing_source_leaves_attribute_absent():
    e = evaluate(STATION, KnowledgeState(), "p0")
    assert "bikes" not in e
    assert e["res"] == 0


def test_ambiguous_source_leaves_attribute_absent():
    k = KnowledgeState([("station", 5, 0), ("station", 3, 0)])
    assert "bikes" not in evaluate(STATION, k)


def test_only_id_over_empty_knowledge():
    e = evaluate(InterfaceDef("X"), KnowledgeState(), "c1")
    assert e == {"id": "c1"}


def test_evaluate_is_pure():
    a = evaluate(STATION, KnowledgeState([("res",), ("station", 1, 0)]), "p")
    b = evaluate(STATION, KnowledgeState([("station", 1, 0), ("res",)]), "p")
    assert a == b and hash(a) == hash(b)


def test_satisfies_basic():
    e = {"battery": 5, "kind": "user"}
    assert satisfies(e, parse_predicate("battery >= 3"))
    assert not satisfies(e, parse_predicate("battery < 3"))
    assert satisfies(e, parse_predicate('kind == "user" && battery > 1'))
    assert satisfies(e, parse_predicate('kind == "station" || battery > 1'))
    assert satisfies(e, TT())


def test_absent_attribute_comparison_is_false():
    assert not satisfies({}, parse_predicate("battery < 3"))
    assert not satisfies({}, parse_predicate("battery >= 3"))


def test_incomparable_types_are_false():
    assert not satisfies({"kind": "user"}, parse_predicate("kind < 3"))


def test_arithmetic_in_predicates():
    e = {"loc": 5}
    assert satisfies(e, parse_predicate("abs(6 // 4 - loc // 4) + abs(6 % 4 - loc % 4) <= 1"))
    assert not satisfies(e, parse_predicate("abs(15 // 4 - loc // 4) + abs(15 % 4 - loc % 4) <= 1"))


attrs = st.dictionaries(st.sampled_from(["a", "b"]), st.integers(-3, 3))


def comparisons():
    return st.builds(lambda name, op, v: Compare(Attr(name), op, Lit(v)),
                     st.sampled_from(["a", "b"]), st.sampled_from(["<", "<=", ">", ">=", "==", "!="]),
                     st.integers(-3, 3))


preds = st.recursive(st.one_of(st.just(TT()), comparisons()),
                     lambda sub: st.one_of(st.builds(Not, sub), st.builds(And, sub, sub)),
                     max_leaves=6)


@given(attrs, preds)
def test_negation_is_homomorphic(e, p):
    assert satisfies(e, Not(p)) == (not satisfies(e, p))


@given(attrs, preds, preds)
def test_conjunction_is_homomorphic(e, p, q):
    assert satisfies(e, And(p, q)) == (satisfies(e, p) and satisfies(e, q))
