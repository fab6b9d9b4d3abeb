"""Finite-support continuation functions.

A :class:`ContinuationFunction` maps states to non-negative reals and is zero
outside a finite support. It is the third element of every rate transition
``(source, label, continuation)``; a positive value is the rate (or, for input
actions, the probability) of reaching that state.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Hashable, Iterator, Mapping
from dataclasses import dataclass
from typing import Any, Generic, TypeVar

X = TypeVar("X", bound=Hashable)
L = TypeVar("L")

#: entries below this magnitude are dropped from the support
EPSILON = 1e-15
#: relative tolerance used by ``==`` on continuation functions
REL_TOL = 1e-12
#: tolerance used when a continuation function is read as a distribution
DIST_TOL = 1e-9


class NotADistribution(ValueError):
    pass


class ContinuationFunction(Mapping, Generic[X]):
    """Immutable finite-support function ``X -> R>=0``.

    Absent keys evaluate to ``0``. Entries are kept in insertion order so that
    iteration is deterministic for a deterministic construction sequence.
    """

    __slots__ = ("_m", "_mass")

    def __init__(self, entries: Mapping[X, float] | None = None):
        m: dict[X, float] = {}
        if entries:
            for d, v in entries.items():
                if v < 0 or math.isnan(v):
                    raise ValueError(f"negative weight {v!r} for {d!r}")
                if v > EPSILON:
                    m[d] = float(v)
        self._m = m

    @classmethod
    def _trusted(cls, m: dict) -> ContinuationFunction:
        f = cls.__new__(cls)
        f._m = m
        return f

    def __call__(self, d: X) -> float:
        return self._m.get(d, 0.0)

    def __getitem__(self, d: X) -> float:
        return self._m[d]

    def __iter__(self) -> Iterator[X]:
        return iter(self._m)

    def items(self):
        return self._m.items()

    def keys(self):
        return self._m.keys()

    def values(self):
        return self._m.values()

    def __len__(self) -> int:
        return len(self._m)

    def __bool__(self) -> bool:
        return bool(self._m)

    @property
    def support(self) -> tuple:
        return tuple(self._m)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ContinuationFunction):
            return NotImplemented
        if self._m.keys() != other._m.keys():
            return False
        return all(math.isclose(v, other._m[d], rel_tol=REL_TOL, abs_tol=0.0)
                   for d, v in self._m.items())

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        if not self._m:
            return "[]"
        return "[" + ", ".join(f"{d!r} -> {v:g}" for d, v in self._m.items()) + "]"

    def __add__(self, other: ContinuationFunction) -> ContinuationFunction:
        return add(self, other)

    def __mul__(self, gamma: float) -> ContinuationFunction:
        return scale(self, gamma)

    __rmul__ = __mul__

    def map_states(self, fn: Callable[[X], Any]) -> ContinuationFunction:
        """Push the function forward along ``fn``, summing colliding images."""
        m: dict = {}
        for d, v in self._m.items():
            e = fn(d)
            m[e] = m.get(e, 0.0) + v
        return ContinuationFunction._trusted(m)


EMPTY: ContinuationFunction = ContinuationFunction()


def point(d: X, gamma: float) -> ContinuationFunction[X]:
    if gamma < 0:
        raise ValueError(f"negative weight {gamma!r}")
    if gamma <= EPSILON:
        return EMPTY
    return ContinuationFunction._trusted({d: float(gamma)})


def char(d: X) -> ContinuationFunction[X]:
    return ContinuationFunction._trusted({d: 1.0})


def add(f: ContinuationFunction[X], g: ContinuationFunction[X]) -> ContinuationFunction[X]:
    if not g._m:
        return f
    if not f._m:
        return g
    m = dict(f._m)
    for d, v in g._m.items():
        m[d] = m.get(d, 0.0) + v
    return ContinuationFunction._trusted(m)


def total(fs) -> ContinuationFunction:
    """Sum an iterable of continuation functions."""
    m: dict = {}
    for f in fs:
        for d, v in f._m.items():
            m[d] = m.get(d, 0.0) + v
    return ContinuationFunction._trusted(m)


def pair(f: ContinuationFunction, g: ContinuationFunction,
         op: Callable[[Any, Any], X]) -> ContinuationFunction[X]:
    """``(f op g)(d1 op d2) = f(d1) * g(d2)``.

    ``op`` should be injective on the supports; if it is not, colliding
    images have their products summed.
    """
    m: dict = {}
    for d1, v1 in f._m.items():
        for d2, v2 in g._m.items():
            v = v1 * v2
            if v > EPSILON:
                d = op(d1, d2)
                m[d] = m.get(d, 0.0) + v
    return ContinuationFunction._trusted(m)


def scale(f: ContinuationFunction[X], gamma: float) -> ContinuationFunction[X]:
    if gamma < 0:
        raise ValueError(f"negative scale {gamma!r}")
    if gamma == 1.0:
        return f
    m = {}
    for d, v in f._m.items():
        w = v * gamma
        if w > EPSILON:
            m[d] = w
    return ContinuationFunction._trusted(m)


def total_mass(f: ContinuationFunction) -> float:
    try:
        return f._mass
    except AttributeError:
        f._mass = math.fsum(f._m.values())
        return f._mass


def as_distribution(f: ContinuationFunction[X]) -> ContinuationFunction[X]:
    """Return ``f`` unchanged after checking that it sums to one."""
    mass = total_mass(f)
    if abs(mass - 1.0) > DIST_TOL:
        raise NotADistribution(f"mass {mass!r} is not 1")
    return f


def dirac(d: X) -> ContinuationFunction[X]:
    return char(d)


@dataclass(frozen=True)
class RateTransition(Generic[X, L]):
    source: X
    label: L
    continuation: ContinuationFunction[X]
