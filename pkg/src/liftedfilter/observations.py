"""Sensor models and likelihoods on lifted states.

Two sensor kinds watch one ``(slot, value)`` pair, typically a location:

* ``presence``: a boolean, true when at least one entity is there.
* ``identify``: the set of identities (values of ``id_slot``) of the
  entities there.

Noise: a presence sensor misses an occupied place with probability ``fn``
and fires on an empty one with ``fp``. An identify sensor reports each entity
at its place with probability ``1 - fn`` and each entity elsewhere with
probability ``fp``; the reading is the set of reported identities.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .distributions import Dirac, _as_fraction
from .errors import SlotAbsent, ValidationError, ValueImpossible
from .state import LiftedState, is_decided, split_on_slot_value

KINDS = ("presence", "identify")


class SplitRequest(NamedTuple):
    slot: str
    value: str


@dataclass(frozen=True)
class SensorSpec:
    id: str
    kind: str
    watched_slot: str
    watched_value: str
    false_positive: Fraction = Fraction(0)
    false_negative: Fraction = Fraction(0)
    id_slot: str = "ID"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"sensor {self.id!r}: unknown kind {self.kind!r}")
        for name in ("false_positive", "false_negative"):
            p = _as_fraction(getattr(self, name))
            if not 0 <= p < Fraction(1, 2):
                raise ValidationError(f"sensor {self.id!r}: {name} must be in [0, 0.5)")
            object.__setattr__(self, name, p)

    def to_json(self):
        d = {"id": self.id, "kind": self.kind, "slot": self.watched_slot, "value": self.watched_value,
             "fp": str(self.false_positive), "fn": str(self.false_negative)}
        if self.kind == "identify":
            d["id_slot"] = self.id_slot
        return d


@dataclass(frozen=True)
class Observation:
    """Readings for one timestep: sensor id -> bool (presence) or frozenset (identify)."""

    readings: tuple  # sorted (sensor id, reading)

    @classmethod
    def of(cls, mapping) -> "Observation":
        items = []
        for k, v in mapping.items():
            items.append((k, v if isinstance(v, bool) else frozenset(v)))
        return cls(tuple(sorted(items, key=lambda kv: kv[0])))

    def __getitem__(self, key):
        return dict(self.readings)[key]

    def to_json(self):
        return {k: v if isinstance(v, bool) else sorted(v) for k, v in self.readings}


def _occupancy(s: LiftedState, slot: str, value: str) -> int:
    b = s.bindings
    return sum(m for e, m in s.groups if dict(e).get(slot) is not None and b[dict(e)[slot]] == Dirac(value))


def presence_likelihood(s: LiftedState, spec: SensorSpec, reading: bool):
    """``P(reading | s)`` or a :class:`SplitRequest` if the watched slot is undecided."""
    if any(slot == spec.watched_slot for e, _ in s.groups for slot, _ in e):
        if not is_decided(s, spec.watched_slot, spec.watched_value):
            return SplitRequest(spec.watched_slot, spec.watched_value)
    occupied = _occupancy(s, spec.watched_slot, spec.watched_value) >= 1
    if reading:
        return 1 - spec.false_negative if occupied else spec.false_positive
    return spec.false_negative if occupied else 1 - spec.false_positive


def _split_all(branches, slot, value):
    out = []
    for w, st in branches:
        if is_decided(st, slot, value):
            out.append((w, st))
            continue
        out.extend((w * w2, s2) for w2, s2 in split_on_slot_value(st, slot, value))
    return out


def decide(s: LiftedState, spec: SensorSpec, reading):
    """Split ``s`` until ``spec``'s likelihood is determinate; ``[(weight, state)]``."""
    branches = [(Fraction(1), s)]
    has_slot = any(slot == spec.watched_slot for e, _ in s.groups for slot, _ in e)
    if has_slot:
        branches = _split_all(branches, spec.watched_slot, spec.watched_value)
    if spec.kind == "identify":
        for v in sorted(reading):
            nxt = []
            for w, st in branches:
                try:
                    nxt.extend(_split_all([(w, st)], spec.id_slot, v))
                except (SlotAbsent, ValueImpossible):
                    nxt.append((w, st))
            branches = nxt
    return branches


def _identify_lik(s: LiftedState, spec: SensorSpec, ids) -> Fraction:
    b = s.bindings
    fp, fn = spec.false_positive, spec.false_negative
    not_reported = {}
    anon = Fraction(1)
    for e, m in s.groups:
        ent = dict(e)
        if spec.id_slot not in ent:
            continue
        here_label = ent.get(spec.watched_slot)
        here = here_label is not None and b[here_label] == Dirac(spec.watched_value)
        miss = fn if here else 1 - fp
        d = b[ent[spec.id_slot]]
        if isinstance(d, Dirac):
            not_reported[d.value] = not_reported.get(d.value, Fraction(1)) * miss**m
        else:
            anon *= miss**m
    lik = anon
    for v, q in not_reported.items():
        lik *= (1 - q) if v in ids else q
    if any(v not in not_reported for v in ids):
        return Fraction(0)
    return lik


def identify_likelihood_update(s: LiftedState, spec: SensorSpec, ids):
    """Split on every reported identity and weight branches by likelihood.

    Returns ``[(weight, state)]`` for branches with positive weight; the
    weights carry split weight times likelihood, so their sum is
    ``P(ids | s)``.
    """
    out = []
    for w, st in decide(s, spec, ids):
        lik = _identify_lik(st, spec, ids)
        if lik:
            out.append((w * lik, st))
    return out


def likelihood_update(s: LiftedState, obs: Observation, sensors):
    """Apply every sensor reading in ``obs`` to ``s``; ``[(weight, state)]``."""
    branches = [(Fraction(1), s)]
    for spec in sensors:
        readings = dict(obs.readings)
        if spec.id not in readings:
            continue
        reading = readings[spec.id]
        nxt = []
        for w, st in branches:
            if spec.kind == "identify":
                nxt.extend((w * w2, s2) for w2, s2 in identify_likelihood_update(st, spec, reading))
                continue
            for w2, s2 in decide(st, spec, reading):
                lik = presence_likelihood(s2, spec, reading)
                if lik:
                    nxt.append((w * w2 * lik, s2))
        branches = nxt
    return branches
