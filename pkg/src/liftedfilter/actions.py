"""Action schemas and maximal parallel compound actions over lifted states.

A schema consumes ``arity`` entities (its participants), each filtered by a
conjunction of slot constraints, and emits the entities produced by its
effect list. A compound action is a multiset of schema instances that use
disjoint entities and leaves no schema applicable to the idle rest.

Compound weights follow rate semantics: the product of the instance rates
times the number of distinct participant selections the compound stands for,
normalised over all maximal compounds of the state.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial, lcm, prod
from operator import add
from typing import NamedTuple, Optional, Union

from .distributions import Dirac, draw_probability
from .errors import InvalidEffect, ValidationError
from .state import LiftedState, canonicalize, from_form, label_descs, split_on_slot_value, validate

OPS = ("eq", "neq", "in")


@dataclass(frozen=True)
class Constraint:
    slot: str
    op: str
    operand: Union[str, frozenset]

    def __post_init__(self):
        if self.op not in OPS:
            raise ValidationError(f"unknown constraint op {self.op!r}")
        if self.op == "in" and not isinstance(self.operand, frozenset):
            object.__setattr__(self, "operand", frozenset(self.operand))
        if self.op != "in" and not isinstance(self.operand, str):
            raise ValidationError(f"{self.op} needs a single value, got {self.operand!r}")

    def holds(self, value: str) -> bool:
        if self.op == "eq":
            return value == self.operand
        if self.op == "neq":
            return value != self.operand
        return value in self.operand

    def test(self, d) -> Optional[bool]:
        """Truth of the constraint for a label; ``None`` when it depends on the draw."""
        results = {self.holds(v) for v in d.support()}
        if len(results) == 1:
            return results.pop()
        return None

    def split_value(self, d) -> str:
        if self.op in ("eq", "neq"):
            return self.operand
        return next(v for v in sorted(d.support()) if v in self.operand)

    def to_json(self):
        operand = sorted(self.operand) if self.op == "in" else self.operand
        return {"slot": self.slot, "op": self.op, "value": operand}


@dataclass(frozen=True)
class SetSlot:
    """Bind ``slot`` of a participant to a literal value or to a copied slot
    ``(participant, slot)`` of the original participants."""

    participant: int
    slot: str
    value: Optional[str] = None
    copy: Optional[tuple] = None


@dataclass(frozen=True)
class RemoveSlot:
    participant: int
    slot: str


@dataclass(frozen=True)
class Consume:
    participant: int


@dataclass(frozen=True)
class Produce:
    """New entity; ``template`` is a sorted tuple of ``(slot, ("value", v))`` or
    ``(slot, ("copy", (participant, slot)))``."""

    template: tuple


@dataclass(frozen=True)
class ActionSchema:
    name: str
    preconditions: tuple  # one tuple of Constraint per participant
    effects: tuple = ()
    rate: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "rate", Fraction(repr(self.rate)) if isinstance(self.rate, float) else Fraction(self.rate))
        if self.rate <= 0:
            raise ValidationError(f"schema {self.name!r}: rate must be positive")
        if self.arity < 1:
            raise ValidationError(f"schema {self.name!r}: needs at least one participant")
        for eff in self.effects:
            for p in _participants_of(eff):
                if not 0 <= p < self.arity:
                    raise ValidationError(f"schema {self.name!r}: effect references participant {p}")

    @property
    def arity(self) -> int:
        return len(self.preconditions)


def _participants_of(eff):
    if isinstance(eff, SetSlot):
        ps = [eff.participant]
        if eff.copy is not None:
            ps.append(eff.copy[0])
        return ps
    if isinstance(eff, (RemoveSlot, Consume)):
        return [eff.participant]
    return [src[1][0] for _, src in eff.template if src[0] == "copy"]


def apply_effects(schema: ActionSchema, entities, literal):
    """Output entities of one instance.

    ``entities`` are the participants' slot maps (slot -> anything), ``literal``
    turns a literal value into the same kind of thing. Works for label maps
    and for ground value maps alike.
    """
    outs = [dict(e) for e in entities]
    alive = [True] * len(outs)
    produced = []

    def source(q, slot):
        try:
            return entities[q][slot]
        except KeyError:
            raise InvalidEffect(f"{schema.name}: participant {q} has no slot {slot!r}") from None

    for eff in schema.effects:
        if isinstance(eff, SetSlot):
            outs[eff.participant][eff.slot] = literal(eff.value) if eff.copy is None else source(*eff.copy)
        elif isinstance(eff, RemoveSlot):
            if eff.slot not in outs[eff.participant]:
                raise InvalidEffect(f"{schema.name}: cannot remove missing slot {eff.slot!r}")
            del outs[eff.participant][eff.slot]
        elif isinstance(eff, Consume):
            alive[eff.participant] = False
        else:
            produced.append({
                slot: literal(src[1]) if src[0] == "value" else source(*src[1])
                for slot, src in eff.template
            })
    result = [o for o, keep in zip(outs, alive) if keep] + produced
    if any(not o for o in result):
        raise InvalidEffect(f"{schema.name}: effect leaves an entity without slots")
    return result


# -- applicability ----------------------------------------------------------

class Applicability(NamedTuple):
    status: str                 # "applicable" | "inapplicable" | "indeterminate"
    bindings: tuple = ()        # group-index tuples, one index per participant
    split: Optional[tuple] = None  # (slot, value) to split on when indeterminate


def _entity_test(entity: dict, constraints, b):
    """True/False/(slot, value) split request for one group against one participant."""
    pending = None
    for c in constraints:
        label = entity.get(c.slot)
        if label is None:
            return False
        r = c.test(b[label])
        if r is False:
            return False
        if r is None and pending is None:
            pending = (c.slot, c.split_value(b[label]))
    return True if pending is None else pending


def _bindings(s, candidates):
    """Ordered group tuples that respect group multiplicities."""
    mult = [m for _, m in s.groups]
    out = []
    for combo in itertools.product(*candidates):
        used = Counter(combo)
        if all(used[g] <= mult[g] for g in used):
            out.append(combo)
    return out


def _copy_split(s, schema, combo):
    """Split request when a non-Dirac label would be referenced twice after the effect."""
    ents = [dict(s.groups[g][0]) for g in combo]
    markers = [{slot: ("m", q, slot) for slot in e} for q, e in enumerate(ents)]
    outs = apply_effects(schema, markers, lambda v: ("v", v))
    counts = Counter(x for o in outs for x in o.values() if x[0] == "m")
    b = s.bindings
    for (_, q, slot), n in sorted(counts.items()):
        d = b[ents[q][slot]]
        if n > 1 and not isinstance(d, Dirac):
            return slot, sorted(d.support())[0]
    return None


def applicability(s: LiftedState, schema: ActionSchema) -> Applicability:
    b = s.bindings
    ents = [dict(e) for e, _ in s.groups]
    candidates = []
    split = None
    for constraints in schema.preconditions:
        ok = []
        for gi, e in enumerate(ents):
            r = _entity_test(e, constraints, b)
            if r is True:
                ok.append(gi)
            elif r is not False and split is None:
                split = r
        candidates.append(ok)
    if split is not None:
        return Applicability("indeterminate", split=split)
    combos = _bindings(s, candidates)
    for combo in combos:
        req = _copy_split(s, schema, combo)
        if req is not None:
            return Applicability("indeterminate", split=req)
    if not combos:
        return Applicability("inapplicable")
    return Applicability("applicable", bindings=tuple(combos))


def resolve(s: LiftedState, schemas):
    """Split ``s`` until every schema is determinately (in)applicable.

    Returns ``([(weight, state)], number_of_splits)``.
    """
    done = []
    todo = [(Fraction(1), canonicalize(s))]
    n_splits = 0
    while todo:
        w, st = todo.pop()
        req = None
        for schema in schemas:
            a = applicability(st, schema)
            if a.status == "indeterminate":
                req = a.split
                break
        if req is None:
            done.append((w, st))
            continue
        n_splits += 1
        branches = split_on_slot_value(st, *req)
        todo.extend((w * w2, s2) for w2, s2 in reversed(branches))
    return done, n_splits


# -- compound actions -------------------------------------------------------

@dataclass(frozen=True)
class Instance:
    schema: int    # index into the schema list
    groups: tuple  # group index per participant


@dataclass(frozen=True)
class CompoundAction:
    """Multiset of instances as a sorted tuple of ``(Instance, count)``."""

    instances: tuple = field(default=())

    def describe(self, schemas) -> str:
        if not self.instances:
            return "∅"
        return " + ".join(f"{n}×{schemas[i.schema].name}{list(i.groups)}" for i, n in self.instances)


def _instance_types(s, schemas):
    types = []
    for k, schema in enumerate(schemas):
        a = applicability(s, schema)
        if a.status == "indeterminate":
            raise ValueError(f"schema {schema.name!r} is indeterminate on this state; resolve() first")
        for combo in a.bindings:
            types.append(Instance(k, combo))
    return types


def _components(s, types):
    parent = list(range(len(s.groups)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for t in types:
        for g in t.groups[1:]:
            parent[find(g)] = find(t.groups[0])
    comps = {}
    for t in types:
        comps.setdefault(find(t.groups[0]), []).append(t)
    return [comps[r] for r in sorted(comps)]


def _local_compounds(types, mult, schemas):
    """Maximal count vectors over ``types`` with their unnormalised weights."""
    need = [Counter(t.groups) for t in types]
    groups = sorted({g for t in types for g in t.groups})
    out = []

    def rec(i, residual, counts):
        if i == len(types):
            if any(all(residual[g] >= k for g, k in nd.items()) for nd in need):
                return
            w = Fraction(1)
            for t, n in zip(types, counts):
                if n:
                    w *= schemas[t.schema].rate ** n / factorial(n)
            w *= prod(Fraction(factorial(mult[g]), factorial(residual[g])) for g in groups)
            out.append((tuple(counts), w))
            return
        nd = need[i]
        cap = min(residual[g] // k for g, k in nd.items())
        for n in range(cap, -1, -1):
            for g, k in nd.items():
                residual[g] -= n * k
            counts.append(n)
            rec(i + 1, residual, counts)
            counts.pop()
            for g, k in nd.items():
                residual[g] += n * k

    rec(0, Counter({g: mult[g] for g in groups}), [])
    return out


def enumerate_maximal_compounds(s: LiftedState, schemas):
    """All maximal compounds of a determinate state with normalised weights."""
    schemas = list(schemas)
    types = _instance_types(s, schemas)
    mult = [m for _, m in s.groups]
    per_comp = []
    for comp in _components(s, types):
        local = _local_compounds(comp, mult, schemas)
        z = sum(w for _, w in local)
        per_comp.append([(tuple((t, n) for t, n in zip(comp, counts) if n), w / z) for counts, w in local])
    out = []
    for combo in itertools.product(*per_comp):
        inst = tuple(sorted((x for part, _ in combo for x in part), key=lambda tn: (tn[0].schema, tn[0].groups)))
        out.append((CompoundAction(inst), prod((w for _, w in combo), start=Fraction(1))))
    return out


def _dirac_label(value):
    return "=" + value


def _apply_counts(s, schemas, pairs):
    """Output entity counter and extra context for ``[(Instance, count)]``."""
    residual = Counter({gi: m for gi, (_, m) in enumerate(s.groups)})
    out = Counter()
    extra = {}
    known = {}
    for lb, d in sorted(s.bindings.items(), reverse=True):
        if isinstance(d, Dirac):
            known[d.value] = lb

    def literal(v):
        if v in known:
            return known[v]
        extra[_dirac_label(v)] = Dirac(v)
        return _dirac_label(v)

    for inst, n in pairs:
        for g in inst.groups:
            residual[g] -= n
        ents = [dict(s.groups[g][0]) for g in inst.groups]
        for o in apply_effects(schemas[inst.schema], ents, literal):
            out[tuple(sorted(o.items()))] += n
    if any(v < 0 for v in residual.values()):
        raise InvalidEffect("compound consumes more entities than available")
    return out, residual, extra


def _finish(s, entity_counts, extra):
    ctx = dict(s.bindings)
    ctx.update(extra)
    st = LiftedState(tuple(sorted(entity_counts.items())), tuple(sorted(ctx.items())))
    st = canonicalize(st)
    v = validate(st)
    if v is not None:
        raise InvalidEffect(f"effect produced an invalid state: {v.message}")
    return st


def apply_compound(s: LiftedState, c: CompoundAction, schemas) -> LiftedState:
    schemas = list(schemas)
    out, residual, extra = _apply_counts(s, schemas, c.instances)
    for gi, n in residual.items():
        if n:
            out[s.groups[gi][0]] += n
    return _finish(s, out, extra)


def successors(s: LiftedState, schemas, weight=Fraction(1)):
    """Predicted ``[(weight, canonical state)]`` from a determinate state,
    with every output weight scaled by ``weight``.

    Equivalent to enumerating every maximal compound and applying it, but
    folds independent components one at a time and merges equal partial
    outputs, which keeps anonymous groups cheap.
    """
    result, denom = _successor_counts(s, list(schemas))
    weight = Fraction(weight)
    num, denom = weight.numerator, denom * weight.denominator
    return [(Fraction(w * num, denom), st) for st, w in result.items()]


def _successor_counts(s, schemas):
    """``({state: int weight}, denominator)`` for :func:`successors`.

    Partial outputs are count vectors over a fixed index of output entities,
    packed into one integer in base ``N + 1`` (``N`` entities, so no digit
    ever carries) so that combining two partial outputs is one addition.
    """
    types = _instance_types(s, schemas)
    mult = [m for _, m in s.groups]
    touched = set()
    extra_all = {}
    comp_outcomes = []  # per component: [(entity Counter, int weight)], int total
    for comp in _components(s, types):
        comp_groups = sorted({g for t in comp for g in t.groups})
        touched.update(comp_groups)
        local = _local_compounds(comp, mult, schemas)
        scale = lcm(*(w.denominator for _, w in local))
        outcomes = []
        for counts, w in local:
            out, residual, extra = _apply_counts(s, schemas, [(t, n) for t, n in zip(comp, counts) if n])
            extra_all.update(extra)
            for g in comp_groups:
                if residual[g]:
                    out[s.groups[g][0]] += residual[g]
            outcomes.append((out, int(w * scale)))
        comp_outcomes.append((outcomes, sum(w for _, w in outcomes)))
    idle = Counter({s.groups[g][0]: m for g, m in enumerate(mult) if g not in touched})

    ctx = dict(s.bindings)
    ctx.update(extra_all)
    entities = set(idle)
    size = sum(idle.values())
    for outcomes, _ in comp_outcomes:
        for out, _ in outcomes:
            entities.update(out)
        size += max((sum(out.values()) for out, _ in outcomes), default=0)
    fast = None
    if not _structural(schemas):
        # plain value updates keep the state valid; with at most one urn the
        # descriptor form is the canonical key
        desc, n_urns = label_descs(LiftedState(tuple((e, 1) for e in sorted(entities)),
                                               tuple(sorted(ctx.items()))))
        if n_urns <= 1:
            fast = desc
    if fast is not None:
        # index by descriptor entity so a vector reads off as a sorted form key
        keyed = {e: tuple((slot, fast[lb]) for slot, lb in e) for e in entities}
        order = sorted(set(keyed.values()))
    else:
        keyed = {e: e for e in entities}
        order = sorted(entities)
    base = size + 1
    place = {k: base**i for i, k in enumerate(order)}

    def pack(counter):
        return sum(m * place[keyed[e]] for e, m in counter.items())

    partial = {pack(idle): 1}
    denom = 1
    for outcomes, z in comp_outcomes:
        denom *= z
        vecs = Counter()
        for out, w in outcomes:
            vecs[pack(out)] += w
        nxt = Counter()
        for key, w in partial.items():
            for key2, w2 in vecs.items():
                nxt[key + key2] += w * w2
        partial = nxt

    result = {}
    for key, w in partial.items():
        counts = []
        for i in range(len(order)):
            key, c = divmod(key, base)
            if c:
                counts.append((order[i], c))
        if fast is not None:
            st = from_form(tuple(counts))
        else:
            st = _finish(s, Counter(dict(counts)), extra_all)
        result[st] = result.get(st, 0) + w
    return result, denom


def _structural(schemas) -> bool:
    """True if some effect can break validity (copies, removals, produce)."""
    return any(
        isinstance(eff, (RemoveSlot, Produce)) or (isinstance(eff, SetSlot) and eff.copy is not None)
        for schema in schemas
        for eff in schema.effects
    )


def predict_counts(s: LiftedState, schemas, weight=Fraction(1)):
    """Like :func:`predict_state` but with integer weights over one denominator.

    Returns ``({state: numerator}, denominator, number_of_splits)``; callers
    summing many of these avoid building a Fraction per successor.
    """
    schemas = list(schemas)
    branches, n_splits = resolve(s, schemas)
    parts = []
    for w, st in branches:
        result, denom = _successor_counts(st, schemas)
        w = Fraction(weight) * w
        parts.append((result, w.numerator, denom * w.denominator))
    common = lcm(*(d for _, _, d in parts))
    out = {}
    for result, num, d in parts:
        f = num * (common // d)
        for s2, k in result.items():
            out[s2] = out.get(s2, 0) + k * f
    return out, common, n_splits


def predict_state(s: LiftedState, schemas, weight=Fraction(1)):
    """Resolve indeterminate preconditions, then step every branch.

    Returns ``([(weight, state)], number_of_splits)`` with weights scaled by
    ``weight``.
    """
    out, common, n_splits = predict_counts(s, schemas, weight)
    return [(Fraction(k, common), st) for st, k in out.items()], n_splits
