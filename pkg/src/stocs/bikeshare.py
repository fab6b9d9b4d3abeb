"""Bike-sharing case study: model generator, repositories, rate regimes, measures.

Users walk (pedestrians) or ride (bikers) over a grid of locations, one
parking station per location. To borrow, a user reserves a bike at a near
station, travels there, takes the bike and becomes a biker; returning is
symmetric with slot reservations.

Knowledge layout:

* user: ``<"state", "p"|"b">`` and ``<"loc", l>``;
* station: one item ``<"station", ba, br, sa, sr, l>`` (available bikes,
  reserved bikes, available slots, reserved slots, location).

Station bookkeeping (total ``ba + br + sa + sr`` is preserved):

=========================  ======================================
``get <"bike_res", ?ID>``  needs ``ba > 0``; ``ba - 1``, ``br + 1``
``get <"slot_res", ?ID>``  needs ``sa > 0``; ``sa - 1``, ``sr + 1``
``get <"bike">``           needs ``br > 0``; ``br - 1``, ``sa + 1``
``put <"bike">``           ``sr - 1`` (else ``sa - 1``), ``ba + 1``
=========================  ======================================

Station IDs are location indices (row-major).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .ctmc import Measure
from .futs import ContinuationFunction, char
from .knowledge import KnowledgeState, TupleSpace, match, register_repository
from .rates import RateConfig
from .syntax import build, check_model, parse_model
from .terms import Formal, Lit, Prefix

ROW_TOL = 1e-9


# ---------------------------------------------------------------------------
# repositories

class UserRepository(TupleSpace):
    """User knowledge; movement draws the next location from a row of Q_p / Q_b."""

    name = "bikeshare_user"

    def __init__(self, qp, qb):
        self.qp = [list(map(float, row)) for row in qp]
        self.qb = [list(map(float, row)) for row in qb]
        for name, q in (("qp", self.qp), ("qb", self.qb)):
            _check_stochastic(name, q)

    def oplus(self, k: KnowledgeState, t) -> ContinuationFunction:
        if t in (("b",), ("p",)):
            return char(_set(k, "state", t[0]))
        if len(t) == 2 and t[0] == "go":
            return char(_set(k, "loc", t[1]))
        return char(k)

    def ominus(self, k: KnowledgeState, template):
        if len(template) == 2 and template[0] in ("p_next", "b_next"):
            loc = _get(k, "loc")
            if loc is None:
                return None
            q = self.qp if template[0] == "p_next" else self.qb
            out = {}
            for j, prob in enumerate(q[loc]):
                item = (template[0], j)
                if prob > 0 and match(template, item) is not None:
                    out[(_set(k, "loc", j), item)] = prob
            return ContinuationFunction(out) if out else None
        return super().ominus(k, template)

    def __reduce__(self):
        return (UserRepository, (self.qp, self.qb))


class StationRepository(TupleSpace):
    """Parking station knowledge with reservation bookkeeping."""

    name = "bikeshare_station"

    def oplus(self, k: KnowledgeState, t) -> ContinuationFunction:
        st = _station(k)
        if st is None or t != ("bike",):
            return char(k)
        ba, br, sa, sr, loc = st
        if sr > 0:
            sr -= 1
        elif sa > 0:
            sa -= 1
        return char(_with_station(k, (ba + 1, br, sa, sr, loc)))

    def ominus(self, k: KnowledgeState, template):
        st = _station(k)
        if st is None:
            return super().ominus(k, template)
        ba, br, sa, sr, loc = st
        if len(template) == 2 and template[0] in ("bike_res", "slot_res"):
            item = (template[0], loc)
            if match(template, item) is None:
                return None
            if template[0] == "bike_res":
                if ba <= 0:
                    return None
                new = (ba - 1, br + 1, sa, sr, loc)
            else:
                if sa <= 0:
                    return None
                new = (ba, br, sa - 1, sr + 1, loc)
            return ContinuationFunction({(_with_station(k, new), item): 1.0})
        if tuple(template) == ("bike",):
            if br <= 0:
                return None
            return ContinuationFunction({(_with_station(k, (ba, br - 1, sa + 1, sr, loc)), ("bike",)): 1.0})
        return super().ominus(k, template)


register_repository(UserRepository.name, UserRepository)
register_repository(StationRepository.name, StationRepository)


def _check_stochastic(name, q):
    m = len(q)
    for i, row in enumerate(q):
        if len(row) != m:
            raise ValueError(f"{name}: row {i} has {len(row)} entries, expected {m}")
        if any(x < 0 for x in row) or abs(math.fsum(row) - 1.0) > ROW_TOL:
            raise ValueError(f"{name}: row {i} is not a probability distribution")


def _get(k: KnowledgeState, tag):
    found = k.tagged(tag)
    return found[0][0][1] if len(found) == 1 else None


def _set(k: KnowledgeState, tag, value) -> KnowledgeState:
    found = k.tagged(tag)
    if len(found) != 1:
        return k
    return k.replace(found[0][0], (tag, value))


def _station(k: KnowledgeState):
    found = k.tagged("station")
    if len(found) != 1:
        return None
    return found[0][0][1:]


def _with_station(k: KnowledgeState, fields) -> KnowledgeState:
    return k.replace(k.tagged("station")[0][0], ("station",) + tuple(fields))


# ---------------------------------------------------------------------------
# configuration

REGIMES = ("resource", "constant")

#: default coefficients; the case study leaves the rate function unspecified,
#: so these are choices of this artifact and not published values
DEFAULT_PARAMS = {
    "move_p": 1.0,      # pedestrian movement
    "move_b": 1.0,      # biker movement
    "res": 1.0,         # reservation coefficient per available bike/slot
    "travel": 4.0,      # travel to the reserved station: travel / (1 + distance)
    "fast": 10.0,       # local bookkeeping actions
}


@dataclass
class BikeShareConfig:
    rows: int = 4
    cols: int = 4
    users: int = 40
    bikes: int | list = 5
    slots: int | list = 5
    regime: str = "resource"
    placement: list | None = None  # users per location, defaults to round robin
    qp: list | None = None
    qb: list | None = None
    radius: int = 1  # neighbourhood: Manhattan distance <= radius
    params: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.rows * self.cols

    def distance(self, a: int, b: int) -> int:
        return abs(a // self.cols - b // self.cols) + abs(a % self.cols - b % self.cols)

    def near(self, a: int, b: int) -> bool:
        return self.distance(a, b) <= self.radius

    def station_bikes(self) -> list[int]:
        return _per_location(self.bikes, self.m, "bikes")

    def station_slots(self) -> list[int]:
        return _per_location(self.slots, self.m, "slots")

    def user_placement(self) -> list[int]:
        if self.placement is not None:
            return list(self.placement)
        base, extra = divmod(self.users, self.m)
        return [base + (1 if i < extra else 0) for i in range(self.m)]

    def movement(self) -> tuple[list, list]:
        walk = [[1.0 / sum(self.near(i, j) for j in range(self.m)) if self.near(i, j) else 0.0
                 for j in range(self.m)] for i in range(self.m)]
        return (self.qp if self.qp is not None else walk,
                self.qb if self.qb is not None else walk)

    def coefficients(self) -> dict:
        d = dict(DEFAULT_PARAMS)
        d.update(self.params)
        return d

    def validate(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid dimensions must be positive")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        k = self.user_placement()
        if len(k) != self.m or any(x < 0 for x in k) or sum(k) != self.users:
            raise ValueError("user placement must give a non-negative count per location summing to users")
        for name, v in (("bikes", self.station_bikes()), ("slots", self.station_slots())):
            if any(x < 0 for x in v):
                raise ValueError(f"{name} must be non-negative")
        qp, qb = self.movement()
        for name, q in (("qp", qp), ("qb", qb)):
            if len(q) != self.m:
                raise ValueError(f"{name} must be {self.m}x{self.m}")
            _check_stochastic(name, q)
        for name, v in self.coefficients().items():
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise ValueError(f"coefficient {name} must be a non-negative number")


def _per_location(v, m, name):
    if isinstance(v, int):
        return [v] * m
    v = list(v)
    if len(v) != m:
        raise ValueError(f"{name}: expected {m} values, got {len(v)}")
    return v


# ---------------------------------------------------------------------------
# model generation

_PROCS = """\
proc Pedestrian = get(<"p_next", ?L>)@self.Borrow;
proc Biker = get(<"b_next", ?L>)@self.Return;
proc Borrow = qry(<"loc", ?L>)@self.get(<"bike_res", ?ID>)@({near}).put(<"go", ID>)@self\
.get(<"bike">)@(loc == ID).put(<"b">)@self.Biker;
proc Return = qry(<"loc", ?L>)@self.get(<"slot_res", ?ID>)@({near}).put(<"go", ID>)@self\
.put(<"bike">)@(loc == ID).put(<"p">)@self.Pedestrian;
"""


def _literal(v) -> str:
    return json.dumps(v)


def model_text(cfg: BikeShareConfig) -> str:
    cfg.validate()
    qp, qb = cfg.movement()
    w = cfg.cols
    near = (f'kind == "station" && abs(L // {w} - loc // {w}) + abs(L % {w} - loc % {w})'
            f' <= {cfg.radius}')
    out = [
        "# bike sharing: users over a grid, one parking station per location",
        f"# grid {cfg.rows}x{cfg.cols}, {cfg.users} users",
        "attributes kind, state, loc, bikes, bres, slots, sres;",
        f"repository users = bikeshare_user(qp = {_literal(qp)}, qb = {_literal(qb)});",
        "repository stations = bikeshare_station();",
        'interface User { kind = "user"; state = field("state", 1); loc = field("loc", 1); }',
        'interface Station { kind = "station"; bikes = field("station", 1); '
        'bres = field("station", 2); slots = field("station", 3); sres = field("station", 4); '
        'loc = field("station", 5); }',
        _PROCS.format(near=near),
    ]
    bikes, slots, k = cfg.station_bikes(), cfg.station_slots(), cfg.user_placement()
    for i in range(cfg.m):
        if k[i]:
            count = f" * {k[i]}" if k[i] > 1 else ""
            out.append(f'component u{i}{count} {{ interface User; repository users; '
                       f'knowledge {{ <"state", "p">, <"loc", {i}> }} process Pedestrian; }}')
        out.append(f'component p{i} {{ interface Station; repository stations; '
                   f'knowledge {{ <"station", {bikes[i]}, 0, {slots[i]}, 0, {i}> }} process nil; }}')
    return "\n".join(out) + "\n"


def rate_data(cfg: BikeShareConfig) -> dict:
    c = cfg.coefficients()
    if cfg.regime == "resource":
        bike, slot = "res * dst.bikes", "res * dst.slots"
    else:
        # same average speed as the resource regime at the initial state
        b0 = max(1, round(sum(cfg.station_bikes()) / cfg.m))
        s0 = max(1, round(sum(cfg.station_slots()) / cfg.m))
        bike, slot = f"res * {b0}", f"res * {s0}"
    return {
        "note": "default bike-sharing coefficients chosen by this artifact, not published values",
        "default_rate": c["fast"],
        "params": c,
        "grid": {"width": cfg.cols},
        "rates": [
            {"kind": "get", "tag": "p_next", "rate": "move_p"},
            {"kind": "get", "tag": "b_next", "rate": "move_b"},
            {"kind": "get", "tag": "bike_res", "rate": bike},
            {"kind": "get", "tag": "slot_res", "rate": slot},
            {"kind": "put", "tag": "go", "rate": "travel / (1 + distance(src.loc, item[1]))"},
        ],
    }


def station_rate(regime: str, action: str, station: dict, coefficient: float = 1.0,
                 constant_level: float = 1.0) -> float:
    """Reservation rate offered by a station under ``regime``.

    ``action`` is ``bike_res`` or ``slot_res``. Under the constant regime a
    station with no resource is not offering at all.
    """
    key = {"bike_res": "bikes", "slot_res": "slots"}[action]
    avail = station[key]
    if regime == "resource":
        return coefficient * avail
    if regime == "constant":
        return coefficient * constant_level if avail > 0 else 0.0
    raise ValueError(f"unknown regime {regime!r}")


@dataclass
class BikeShareModel:
    config: BikeShareConfig
    text: str
    rates_json: dict
    system: tuple
    definitions: object
    rates: RateConfig
    stations: list  # component positions of the stations, by location
    users: list

    def semantics(self, name: str = "act-or"):
        from .netor import make_semantics
        return make_semantics(name, self.definitions, self.rates)


def generate(cfg: BikeShareConfig | None = None) -> BikeShareModel:
    cfg = cfg or BikeShareConfig()
    text = model_text(cfg)
    m = parse_model(text)
    diags = check_model(m)
    if diags:
        raise ValueError("generated model is ill formed: " + "; ".join(d.message for d in diags))
    system, defs = build(m)
    data = rate_data(cfg)
    stations = [i for i, c in enumerate(system) if isinstance(c.kind.repository, StationRepository)]
    users = [i for i, c in enumerate(system) if isinstance(c.kind.repository, UserRepository)]
    return BikeShareModel(cfg, text, data, system, defs, RateConfig(data), stations, users)


# ---------------------------------------------------------------------------
# measures and invariants

def imbalance_measures(stations: list | None = None) -> list[Measure]:
    """Available bikes per station (if positions given), their mean and stddev."""
    out = [Measure(f"bikes_p{k}", "value", attribute="bikes", component=i)
           for k, i in enumerate(stations or [])]
    from .syntax import parse_predicate
    is_station = parse_predicate('kind == "station"')
    out.append(Measure("bikes_mean", "mean", attribute="bikes", predicate=is_station))
    out.append(Measure("bikes_std", "std", attribute="bikes", predicate=is_station))
    return out


def stddev(values) -> float:
    """Population standard deviation across stations."""
    return float(np.std(np.asarray(values, dtype=float)))


def _is_state_put(p, flag) -> bool:
    return (isinstance(p, Prefix) and p.action.kind == "put"
            and p.action.fields == (Lit(flag),))


def total_bikes(state) -> int:
    """Bikes in stations (available or reserved), in users' hands, or in flight.

    A user holds a bike from picking it up until returning it; around those
    actions the user state flag lags by one step, which the process head
    tells apart.
    """
    total = 0
    for c in state:
        if isinstance(c.kind.repository, StationRepository):
            st = _station(c.knowledge)
            total += st[0] + st[1]
            total += sum(1 for env in c.envelopes if env.item == ("bike",))
            continue
        s = _get(c.knowledge, "state")
        if s == "b":
            total += 1
        if _is_state_put(c.process, "b"):
            total += 1
        elif _is_state_put(c.process, "p"):
            total -= 1
    return total


def is_reservation(label) -> bool:
    """True for a completed bike or slot reservation."""
    from .actor import SyncGq
    return (type(label) is SyncGq and label.kind == "get" and len(label.template) == 2
            and label.template[0] in ("bike_res", "slot_res")
            and isinstance(label.template[1], Formal))


class ReservationCounter:
    def __init__(self):
        self.count = 0

    def __call__(self, t, old, new, label):
        if is_reservation(label):
            self.count += 1


# ---------------------------------------------------------------------------
# scenario runs

def run_scenario(cfg: BikeShareConfig, t_end: float, n_reps: int, seed: int,
                 grid_points: int = 101, parallelism: int = 1, semantics: str = "act-or"):
    """Replicated simulation of one regime; returns ``(model, summary)``.

    The summary counts completed reservations per replication in ``events``.
    """
    from .ctmc import replicate

    bm = generate(cfg)
    grid = np.linspace(0.0, t_end, grid_points)
    summary = replicate(bm.system, bm.semantics(semantics), t_end, seed, n_reps,
                        imbalance_measures(bm.stations), grid, parallelism, count=is_reservation)
    return bm, summary


def time_average(summary, name: str) -> np.ndarray:
    """Per-replication time average of measure ``name`` over the sampling grid."""
    k = summary.names.index(name)
    grid = summary.grid
    values = summary.per_rep[:, :, k]
    span = grid[-1] - grid[0]
    return trapezoid(values, grid, axis=1) / span
