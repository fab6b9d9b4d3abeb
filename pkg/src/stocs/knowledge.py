"""Knowledge repositories: a tuple-space instantiation with probabilistic operators.

A repository type supplies ``oplus`` (add an item; total), ``ominus`` (withdraw
an item matching a template; partial) and ``infer`` (read an item matching a
template; partial). All three return finite probability distributions,
represented as :class:`~stocs.futs.ContinuationFunction` of mass one; the
partial ones return ``None`` when undefined.
"""
from __future__ import annotations

from collections.abc import Callable, Iterable
from typing import Any

from .futs import ContinuationFunction, EMPTY, char
from .terms import Formal, Item

Template = tuple  # values and Formal fields
Substitution = dict


def _field_key(v) -> tuple:
    return (type(v).__name__, v) if not isinstance(v, (int, float)) else ("num", v)


def item_key(t: Item) -> tuple:
    return tuple(_field_key(v) for v in t)


class KnowledgeState:
    """Immutable multiset of ground items, kept in canonical (sorted) order."""

    __slots__ = ("entries", "_hash")

    def __init__(self, items: Iterable[Item] = ()):
        counts: dict[Item, int] = {}
        for t in items:
            t = tuple(t)
            counts[t] = counts.get(t, 0) + 1
        self.entries = tuple(sorted(counts.items(), key=lambda e: item_key(e[0])))
        self._hash = None

    @classmethod
    def from_counts(cls, counts: dict[Item, int]) -> KnowledgeState:
        k = cls.__new__(cls)
        k.entries = tuple(sorted(((t, n) for t, n in counts.items() if n > 0),
                                 key=lambda e: item_key(e[0])))
        k._hash = None
        return k

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.entries)
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, KnowledgeState):
            return NotImplemented
        return self.entries == other.entries

    def __getstate__(self):
        return self.entries

    def __setstate__(self, entries):
        self.entries = entries
        self._hash = None

    def __repr__(self):
        body = ", ".join(repr(t) if n == 1 else f"{t!r}x{n}" for t, n in self.entries)
        return "{" + body + "}"

    def __len__(self):
        return sum(n for _, n in self.entries)

    def __iter__(self):
        for t, n in self.entries:
            for _ in range(n):
                yield t

    def count(self, t: Item) -> int:
        for u, n in self.entries:
            if u == t:
                return n
        return 0

    def counts(self) -> dict[Item, int]:
        return dict(self.entries)

    def add(self, t: Item) -> KnowledgeState:
        c = self.counts()
        c[tuple(t)] = c.get(tuple(t), 0) + 1
        return KnowledgeState.from_counts(c)

    def remove(self, t: Item) -> KnowledgeState:
        c = self.counts()
        if c.get(t, 0) <= 0:
            raise KeyError(t)
        c[t] -= 1
        return KnowledgeState.from_counts(c)

    def replace(self, old: Item, new: Item) -> KnowledgeState:
        return self.remove(old).add(new)

    def tagged(self, tag) -> list[tuple[Item, int]]:
        return [(t, n) for t, n in self.entries if t and t[0] == tag]


def match(template: Template, t: Item) -> Substitution | None:
    """Positional matching; ``None`` when the template does not match."""
    if len(template) != len(t):
        return None
    theta: dict = {}
    for f, v in zip(template, t):
        if isinstance(f, Formal):
            if f.name in theta:
                if theta[f.name] != v:
                    return None
            else:
                theta[f.name] = v
        elif f != v:
            return None
    return theta


class TupleSpace:
    """Default repository: Dirac insertion, uniform choice among matching occurrences."""

    name = "tuplespace"

    def oplus(self, k: KnowledgeState, t: Item) -> ContinuationFunction:
        return char(k.add(t))

    def matches(self, k: KnowledgeState, template: Template) -> list[tuple[Item, int]]:
        return [(t, n) for t, n in k.entries if match(template, t) is not None]

    def ominus(self, k: KnowledgeState, template: Template) -> ContinuationFunction | None:
        found = self.matches(k, template)
        if not found:
            return None
        total = sum(n for _, n in found)
        return ContinuationFunction({(k.remove(t), t): n / total for t, n in found})

    def infer(self, k: KnowledgeState, template: Template) -> ContinuationFunction | None:
        found = self.matches(k, template)
        if not found:
            return None
        total = sum(n for _, n in found)
        return ContinuationFunction({t: n / total for t, n in found})

    def __repr__(self):
        return f"{type(self).__name__}()"


def oplus(k: KnowledgeState, t: Item, repo: TupleSpace | None = None):
    return (repo or DEFAULT).oplus(k, t)


def ominus(k: KnowledgeState, template: Template, repo: TupleSpace | None = None):
    return (repo or DEFAULT).ominus(k, template)


def infer(k: KnowledgeState, template: Template, repo: TupleSpace | None = None):
    return (repo or DEFAULT).infer(k, template)


DEFAULT = TupleSpace()

# repository types available to model files: name -> factory(**params)
_REGISTRY: dict[str, Callable[..., Any]] = {"tuplespace": TupleSpace}


def register_repository(name: str, factory: Callable[..., Any]) -> None:
    _REGISTRY[name] = factory


def make_repository(name: str, **params) -> Any:
    if name not in _REGISTRY:
        # model-specific repositories register on import
        from . import bikeshare  # noqa: F401
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown repository type {name!r}") from None
    return factory(**params)


def known_repositories() -> list[str]:
    from . import bikeshare  # noqa: F401
    return sorted(_REGISTRY)


__all__ = [
    "EMPTY", "KnowledgeState", "TupleSpace", "match", "oplus", "ominus", "infer",
    "register_repository", "make_repository", "known_repositories", "item_key",
]
