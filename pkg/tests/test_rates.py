import json

import pytest

from stocs.rates import ActionDescriptor, RateConfig, RateConfigError
from stocs.syntax import parse_predicate
from stocs.terms import SELF, Formal

USER = {"id": "u", "loc": 0, "kind": "user"}
REMOTE = parse_predicate('kind == "station"')


def test_default_rate_and_error():
    rc = RateConfig({})
    a = ActionDescriptor("put", ("b",), SELF)
    assert rc.rate(USER, a) == 1.0
    assert rc.loss_probability(USER, a, USER) == 0.0


def test_self_put_lookup():
    rc = RateConfig({"default_rate": 7.0, "rates": [{"kind": "put", "target": "self", "rate": 1.0}]})
    assert rc.rate(USER, ActionDescriptor("put", ("b",), SELF)) == 1.0
    assert rc.rate(USER, ActionDescriptor("put", ("b",), REMOTE)) == 7.0


def test_resource_dependent_rate():
    rc = RateConfig({"rates": [{"kind": "get", "tag": "bike_res", "rate": "0.2 * dst.bikes"}]})
    a = ActionDescriptor("get", ("bike_res", 3), REMOTE, ("bike_res", Formal("ID")))
    for b in (5, 3, 0):
        assert rc.rate(USER, a, {"bikes": b}) == pytest.approx(0.2 * b)


def test_first_match_wins():
    rc = RateConfig({"rates": [{"kind": "put", "rate": 2.0}, {"kind": "put", "rate": 3.0}]})
    assert rc.rate(USER, ActionDescriptor("put", ("x",))) == 2.0


def test_when_clause_and_distance():
    rc = RateConfig({
        "grid": {"width": 4},
        "rates": [{"kind": "put", "tag": "go", "rate": "4 / (1 + distance(src.loc, item[1]))"}],
        "errors": [{"kind": "put", "when": "dst.loc != src.loc", "prob": 0.1}],
    })
    assert rc.rate(USER, ActionDescriptor("put", ("go", 5))) == pytest.approx(4 / 3)
    a = ActionDescriptor("put", ("m",), REMOTE)
    assert rc.loss_probability(USER, a, {"loc": 3}) == 0.1
    assert rc.loss_probability(USER, a, {"loc": 0}) == 0.0


def test_when_on_missing_attribute_does_not_match():
    rc = RateConfig({"rates": [{"kind": "put", "when": "src.battery > 1", "rate": 5.0}]})
    assert rc.rate(USER, ActionDescriptor("put", ("x",))) == 1.0


@pytest.mark.parametrize("data", [
    {"default_rate": -1},
    {"rates": [{"kind": "put", "rate": -2.0}]},
    {"rates": [{"kind": "put", "rate": "1 - 3"}]},
    {"errors": [{"kind": "put", "prob": 1.5}]},
    {"rates": [{"kind": "put", "rate": "__import__('os')"}]},
    {"rates": [{"kind": "put", "rate": "src.__class__"}]},
    {"rates": [{"kind": "nope", "rate": 1}]},
    {"unknown_key": 1},
])
def test_bad_configs_rejected_at_load(data):
    with pytest.raises(RateConfigError):
        RateConfig(data)


def test_attribute_dependent_negative_rate_fails_on_evaluation():
    rc = RateConfig({"rates": [{"kind": "get", "rate": "dst.bikes - 10"}]})
    with pytest.raises(RateConfigError):
        rc.rate(USER, ActionDescriptor("get", ("a",), REMOTE, ("a",)), {"bikes": 1})


def test_load_from_file(tmp_path):
    p = tmp_path / "r.json"
    p.write_text(json.dumps({"default_rate": 2.5}))
    assert RateConfig.load(p).default_rate == 2.5
    p.write_text("{not json")
    with pytest.raises(RateConfigError):
        RateConfig.load(p)


def test_rate_is_deterministic():
    rc = RateConfig({"rates": [{"kind": "get", "rate": "dst.bikes * 2"}]})
    a = ActionDescriptor("get", ("a",), REMOTE, ("a",))
    assert rc.rate(USER, a, {"bikes": 3}) == rc.rate(USER, a, {"bikes": 3}) == 6.0
