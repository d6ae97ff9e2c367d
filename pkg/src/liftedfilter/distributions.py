"""Exact discrete value distributions bound to context labels.

Three kinds are supported:

* ``Dirac(v)``: a point mass, any number of draws all yield ``v``.
* ``Urn(items)``: sampling without replacement from a finite multiset.
* ``Categorical(probs)``: independent draws with replacement.

All probabilities are :class:`fractions.Fraction` so that compositions of
split weights stay exact. Values are plain strings.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

from .errors import CapacityExceeded, ParseError, ValueAbsent

UNBOUNDED = math.inf


@dataclass(frozen=True, order=True)
class Dirac:
    value: str

    def support(self):
        return (self.value,)

    def __str__(self):
        return f"δ({self.value})"


@dataclass(frozen=True, order=True)
class Urn:
    """Multiset of values stored as a sorted tuple of ``(value, multiplicity)``."""

    items: tuple

    def __post_init__(self):
        for _, m in self.items:
            if m < 1:
                raise ValueError("urn multiplicities must be >= 1")

    @classmethod
    def of(cls, values: Iterable[str]) -> "Urn":
        return cls(tuple(sorted(Counter(values).items())))

    @property
    def size(self) -> int:
        return sum(m for _, m in self.items)

    def multiplicity(self, v: str) -> int:
        for value, m in self.items:
            if value == v:
                return m
        return 0

    def support(self):
        return tuple(v for v, _ in self.items)

    def values(self):
        """All values with repetition, sorted."""
        return [v for v, m in self.items for _ in range(m)]

    def __str__(self):
        return "U(" + ",".join(self.values()) + ")"


@dataclass(frozen=True, order=True)
class Categorical:
    """Sorted tuple of ``(value, probability)`` with strictly positive entries."""

    probs: tuple

    def __post_init__(self):
        if not self.probs:
            raise ValueError("categorical needs at least one value")
        for _, p in self.probs:
            if not 0 < p <= 1:
                raise ValueError(f"categorical probability out of range: {p}")
        total = sum(p for _, p in self.probs)
        if abs(total - 1) > Fraction(1, 10**12):
            raise ValueError(f"categorical probabilities sum to {float(total)}")

    @classmethod
    def of(cls, mapping) -> "Categorical":
        """Build from ``{value: prob}``; floats are read as their decimal repr
        and the result is renormalised exactly."""
        ps = {v: _as_fraction(p) for v, p in mapping.items() if p != 0}
        total = sum(ps.values())
        if abs(total - 1) > Fraction(1, 10**12):
            raise ValueError(f"categorical probabilities sum to {float(total)}")
        return cls(tuple(sorted((v, p / total) for v, p in ps.items())))

    def prob(self, v: str) -> Fraction:
        for value, p in self.probs:
            if value == v:
                return p
        return Fraction(0)

    def support(self):
        return tuple(v for v, _ in self.probs)

    def without(self, v: str) -> "Categorical":
        """Condition on the draw not being ``v``."""
        rest = [(value, p) for value, p in self.probs if value != v]
        total = sum(p for _, p in rest)
        return Categorical(tuple((value, p / total) for value, p in rest))

    def __str__(self):
        return "C(" + ",".join(f"{v}:{p}" for v, p in self.probs) + ")"


Distribution = Union[Dirac, Urn, Categorical]


def _as_fraction(p) -> Fraction:
    if isinstance(p, float):
        return Fraction(repr(p))
    return Fraction(p)


def normalize(d: Distribution) -> Distribution:
    """Collapse single-valued urns and categoricals to a Dirac."""
    if isinstance(d, (Urn, Categorical)) and len(d.support()) == 1:
        return Dirac(d.support()[0])
    return d


def capacity(d: Distribution):
    """How many values can be drawn; ``UNBOUNDED`` for Dirac and categorical."""
    if isinstance(d, Urn):
        return d.size
    return UNBOUNDED


def draw_probability(d: Distribution, v: str) -> Fraction:
    """Marginal probability that a single draw yields ``v``."""
    if isinstance(d, Dirac):
        return Fraction(1 if d.value == v else 0)
    if isinstance(d, Urn):
        return Fraction(d.multiplicity(v), d.size)
    return d.prob(v)


def remove_value(d: Urn, v: str) -> Urn:
    """One copy of ``v`` taken out of the urn. The result may be empty."""
    m = d.multiplicity(v)
    if m == 0:
        raise ValueAbsent(f"{v} not in {d}")
    items = [(value, k - 1 if value == v else k) for value, k in d.items]
    return Urn(tuple((value, k) for value, k in items if k > 0))


def insert_value(d: Urn, v: str, count: int = 1) -> Urn:
    c = Counter(dict(d.items))
    c[v] += count
    return Urn(tuple(sorted(c.items())))


def enumerate_draws(d: Distribution, k: int):
    """All ordered ``k``-draws as ``[(value_tuple, probability)]``.

    Urns draw without replacement, categoricals with replacement. Equal value
    tuples are merged, output is sorted by tuple.
    """
    if k > capacity(d):
        raise CapacityExceeded(f"cannot draw {k} values from {d}")
    if isinstance(d, Dirac):
        return [((d.value,) * k, Fraction(1))]
    out = {}
    if isinstance(d, Urn):
        def rec(prefix, remaining, left, prob):
            if len(prefix) == k:
                out[prefix] = out.get(prefix, 0) + prob
                return
            for v, m in remaining.items():
                if m:
                    remaining[v] = m - 1
                    rec(prefix + (v,), remaining, left - 1, prob * Fraction(m, left))
                    remaining[v] = m
        rec((), dict(d.items), d.size, Fraction(1))
    else:
        def rec(prefix, prob):
            if len(prefix) == k:
                out[prefix] = prob
                return
            for v, p in d.probs:
                rec(prefix + (v,), prob * p)
        rec((), Fraction(1))
    return sorted(out.items())


def from_json(obj) -> Distribution:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ParseError(f"distribution must be a one-key object, got {obj!r}")
    (kind, arg), = obj.items()
    try:
        if kind == "dirac":
            return Dirac(str(arg))
        if kind == "urn":
            if not arg:
                raise ParseError("urn must not be empty")
            return Urn.of(str(v) for v in arg)
        if kind == "cat":
            return Categorical.of({str(v): p for v, p in arg.items()})
    except (TypeError, ValueError, AttributeError) as exc:
        raise ParseError(f"bad {kind} distribution {arg!r}: {exc}") from exc
    raise ParseError(f"unsupported distribution kind {kind!r} (only dirac, urn, cat)")


def to_json(d: Distribution):
    if isinstance(d, Dirac):
        return {"dirac": d.value}
    if isinstance(d, Urn):
        return {"urn": d.values()}
    return {"cat": {v: str(p) for v, p in d.probs}}
