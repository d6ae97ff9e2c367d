"""Lifted states: a multiset of entities plus a context of labelled distributions.

An entity is a sorted tuple of ``(slot, label)`` pairs. A lifted state groups
structurally identical entities with a multiplicity and binds every label to a
:mod:`~liftedfilter.distributions` value. Its ground semantics: each label
is sampled once per referencing entity (without replacement for urns,
independently for categoricals, constantly for Diracs), labels independently
of each other.

A ground state is a sorted tuple of ground entities, each a sorted tuple of
``(slot, value)`` pairs, so equal multisets compare equal.
"""
from __future__ import annotations

import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from math import comb, factorial, prod
from typing import NamedTuple, Optional

from . import distributions as dist
from .distributions import Categorical, Dirac, Urn, draw_probability
from .errors import (
    ExplosionGuard,
    InvalidState,
    SelectorAmbiguous,
    SlotAbsent,
    ValueImpossible,
)

DEFAULT_GUARD = 10**6


def make_entity(slots) -> tuple:
    return tuple(sorted(dict(slots).items()))


@dataclass(frozen=True)
class LiftedState:
    groups: tuple   # ((entity, multiplicity), ...)
    context: tuple  # ((label, distribution), ...) sorted by label

    @classmethod
    def build(cls, groups, context) -> "LiftedState":
        """Convenience constructor from ``[(slot_map, count)]`` and ``{label: dist}``."""
        gs = tuple((make_entity(e), int(m)) for e, m in groups)
        return cls(gs, tuple(sorted(dict(context).items())))

    def __getstate__(self):
        # cached hashes are salted per process; keep only data and the canonical flag
        return {"groups": self.groups, "context": self.context,
                "_canonical": self.__dict__.get("_canonical", False)}

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)

    def __hash__(self):
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.groups, self.context))
            object.__setattr__(self, "_hash", h)
        return h

    @cached_property
    def bindings(self) -> dict:
        return dict(self.context)

    @cached_property
    def size(self) -> int:
        return sum(m for _, m in self.groups)

    @cached_property
    def sort_key(self) -> str:
        # a string compares at C speed; repr of the fields is deterministic
        return repr((self.groups, self.context))

    def label_refs(self) -> dict:
        """label -> list of (group index, slot, multiplicity)."""
        refs = defaultdict(list)
        for gi, (e, m) in enumerate(self.groups):
            for slot, label in e:
                refs[label].append((gi, slot, m))
        return refs

    def __str__(self):
        return render(self)


class Violation(NamedTuple):
    rule: int
    message: str


def validate(s: LiftedState) -> Optional[Violation]:
    """``None`` when valid, otherwise the first violated rule.

    Rule 1: every referenced label is bound. Rule 2: urns can supply every
    referencing entity. Rule 3: no unreferenced labels in the context.
    Rule 4: structural sanity (positive multiplicities, non-empty entities and
    urns, no entity drawing twice from the same urn).
    """
    b = s.bindings
    for e, m in s.groups:
        if m < 1:
            return Violation(4, f"multiplicity {m} < 1")
        if not e:
            return Violation(4, "entity without slots")
        for slot, label in e:
            if label not in b:
                return Violation(1, f"label {label!r} (slot {slot!r}) is not bound in the context")
    refs = s.label_refs()
    for label, d in s.context:
        if isinstance(d, Urn):
            if d.size == 0:
                return Violation(4, f"urn {label!r} is empty")
            need = sum(m for _, _, m in refs.get(label, ()))
            if need > d.size:
                return Violation(2, f"urn {label!r} has {d.size} values but {need} entities draw from it")
    for e, _ in s.groups:
        urn_labels = [label for _, label in e if isinstance(b[label], Urn)]
        if len(urn_labels) != len(set(urn_labels)):
            return Violation(4, f"entity {e} draws twice from the same urn")
    for label in b:
        if label not in refs:
            return Violation(3, f"label {label!r} is not referenced")
    return None


# -- canonical form ---------------------------------------------------------

_MAX_TIE_PERMUTATIONS = 720


def canonicalize(s: LiftedState) -> LiftedState:
    """Deterministic normal form.

    Unreferenced labels are dropped, single-valued urns/categoricals become
    Diracs, Diracs (and categoricals) with equal content share one label,
    identical groups are fused and labels are renamed ``L0, L1, ...`` in
    first-reference order over the sorted groups.
    """
    if s.__dict__.get("_canonical"):
        return s
    return _canonicalize(s)


def label_descs(s: LiftedState):
    """Content descriptors ``label -> desc`` for the referenced labels.

    With at most one urn the descriptor form of a state is already its
    canonical key; returns ``(descs, n_urns)``.
    """
    b = s.bindings
    desc = {}
    n_urns = 0
    for e, _ in s.groups:
        for _, label in e:
            if label in desc:
                continue
            d = dist.normalize(b[label])
            if isinstance(d, Dirac):
                desc[label] = ("d", d.value)
            elif isinstance(d, Categorical):
                desc[label] = ("c", d.probs)
            else:
                desc[label] = ("u", 0, d.items)
                n_urns += 1
    return desc, n_urns


def form_key(entity_counts, desc) -> tuple:
    """Sorted ``((desc-entity, count), ...)`` for a counter over label entities."""
    fused = Counter()
    for e, m in entity_counts:
        fused[tuple((slot, desc[label]) for slot, label in e)] += m
    return tuple(sorted(fused.items()))


def _canonicalize(s):
    desc, n_urns = label_descs(s)
    if n_urns <= 1:
        return from_form(form_key(s.groups, desc))
    refs = s.label_refs()
    urns = [label for label, d in desc.items() if d[0] == "u"]
    masked = dict(desc)
    for label in urns:
        masked[label] = ("u", -1, desc[label][2])
    sig = {}
    for label in urns:
        uses = sorted(
            (slot, tuple((sl, masked[lb]) for sl, lb in s.groups[gi][0]), m)
            for gi, slot, m in refs[label]
        )
        sig[label] = (desc[label][2], tuple(uses))
    ordered = sorted(urns, key=lambda lb: sig[lb])
    classes = [list(g) for _, g in itertools.groupby(ordered, key=lambda lb: sig[lb])]
    n_perm = prod(factorial(len(c)) for c in classes)
    if n_perm > _MAX_TIE_PERMUTATIONS:
        candidates = [ordered]
    else:
        candidates = (
            [lb for part in parts for lb in part]
            for parts in itertools.product(*(itertools.permutations(c) for c in classes))
        )
    best = None
    for order in candidates:
        for i, label in enumerate(order):
            desc[label] = ("u", i, desc[label][2])
        f = form_key(s.groups, desc)
        if best is None or f < best:
            best = f
    return from_form(best)


@lru_cache(maxsize=1 << 16)
def from_form(best) -> LiftedState:
    """Canonical state for a descriptor form, naming labels in first-use order."""
    names = {}
    context = {}
    groups = []
    for ent, m in best:
        e = []
        for slot, d in ent:
            name = names.get(d)
            if name is None:
                name = names[d] = f"L{len(names)}"
                context[name] = _from_desc(d)
            e.append((slot, name))
        groups.append((tuple(e), m))
    st = LiftedState(tuple(groups), tuple(sorted(context.items())))
    object.__setattr__(st, "_canonical", True)
    return st


@lru_cache(maxsize=1 << 16)
def _from_desc(d):
    if d[0] == "d":
        return Dirac(d[1])
    if d[0] == "c":
        return Categorical(d[1])
    return Urn(d[2])


# -- grounding --------------------------------------------------------------

def ground_entity(slots) -> tuple:
    return tuple(sorted(dict(slots).items()))


def ground_state(entities) -> tuple:
    """Canonical ground state from an iterable of slot->value maps."""
    return tuple(sorted(ground_entity(e) for e in entities))


def lift_ground(g) -> LiftedState:
    """The all-Dirac lifted state representing exactly one ground state."""
    counts = Counter(g)
    groups = []
    for ent, m in counts.items():
        groups.append(({slot: f"={value}" for slot, value in ent}, m))
    context = {f"={value}": Dirac(value) for ent in counts for _, value in ent}
    return canonicalize(LiftedState.build(groups, context))


def _sub_multisets(avail, size):
    """All multisets (as dicts) of ``size`` drawn from counts ``avail`` (list of (value, count))."""
    if size == 0:
        yield {}
        return
    if not avail:
        return
    (v, c), rest = avail[0], avail[1:]
    for k in range(min(c, size), -1, -1):
        for sub in _sub_multisets(rest, size - k):
            if k:
                sub = dict(sub)
                sub[v] = k
            yield sub


def _falling(n, k):
    return prod(range(n - k + 1, n + 1))


def _label_allocations(d, uses):
    """Distribute draws of one label over its uses.

    ``uses`` is a list of ``(key, count)``; yields ``({key: sorted values}, prob)``
    where the values are the multiset drawn by that use.
    """
    if isinstance(d, Dirac):
        yield {key: (d.value,) * c for key, c in uses}, Fraction(1)
        return
    if isinstance(d, Urn):
        n = d.size
        k_total = sum(c for _, c in uses)
        denom = _falling(n, k_total)

        def rec(i, avail, acc, num):
            if i == len(uses):
                used = {v: d.multiplicity(v) - avail[v] for v in avail}
                p = num * prod(_falling(d.multiplicity(v), u) for v, u in used.items())
                yield dict(acc), Fraction(p, denom)
                return
            key, c = uses[i]
            for sub in _sub_multisets([(v, k) for v, k in avail.items() if k], c):
                nxt = dict(avail)
                for v, k in sub.items():
                    nxt[v] -= k
                acc[key] = tuple(sorted(itertools.chain.from_iterable([v] * k for v, k in sub.items())))
                yield from rec(i + 1, nxt, acc, num * factorial(c) // prod(factorial(k) for k in sub.values()))
            acc.pop(key, None)

        yield from rec(0, dict(d.items), {}, 1)
        return
    support = list(d.probs)

    def rec_c(i, acc, p):
        if i == len(uses):
            yield dict(acc), p
            return
        key, c = uses[i]
        for combo in itertools.combinations_with_replacement(support, c):
            cnt = Counter(v for v, _ in combo)
            q = Fraction(factorial(c), prod(factorial(k) for k in cnt.values()))
            q *= prod(pv for _, pv in combo)
            acc[key] = tuple(sorted(v for v, _ in combo))
            yield from rec_c(i + 1, acc, p * q)
        acc.pop(key, None)

    yield from rec_c(0, {}, Fraction(1))


def _distinct_permutations(values):
    values = sorted(values)
    if not values:
        yield ()
        return
    seen = set()
    for i, v in enumerate(values):
        if v in seen:
            continue
        seen.add(v)
        for rest in _distinct_permutations(values[:i] + values[i + 1:]):
            yield (v,) + rest


def _group_pairings(slots, multisets, m):
    """Ground entity multisets a group of ``m`` entities can produce given the
    multiset of values drawn for each slot. Yields ``(entities, prob)``."""
    uncertain = [i for i, ms in enumerate(multisets) if len(set(ms)) > 1]
    if len(uncertain) <= 1:
        ents = [tuple(zip(slots, vals)) for vals in zip(*multisets)]
        yield ents, Fraction(1)
        return
    first, rest = uncertain[0], uncertain[1:]
    perms = []
    for i in rest:
        cnt = Counter(multisets[i])
        n_distinct = factorial(m) // prod(factorial(k) for k in cnt.values())
        perms.append([(p, Fraction(1, n_distinct)) for p in _distinct_permutations(multisets[i])])
    out = Counter()
    for choice in itertools.product(*perms):
        cols = list(multisets)
        p = Fraction(1)
        for i, (perm, q) in zip(rest, choice):
            cols[i] = perm
            p *= q
        cols[first] = tuple(sorted(multisets[first]))
        ents = tuple(sorted(tuple(zip(slots, vals)) for vals in zip(*cols)))
        out[ents] += p
    for ents, p in out.items():
        yield list(ents), p


def ground_count_bound(s: LiftedState) -> int:
    """Cheap upper bound on the number of ground states of ``s``."""
    b = s.bindings
    bound = 1
    uncertain = Counter()
    for label, uses in s.label_refs().items():
        d = b[label]
        if isinstance(d, Dirac):
            continue
        k = sum(m for _, _, m in uses)
        if isinstance(d, Urn):
            bound *= _falling(d.size, k) // prod(factorial(m) for _, _, m in uses)
        else:
            bound *= prod(comb(m + len(d.probs) - 1, m) for _, _, m in uses)
        for gi, _, _ in uses:
            uncertain[gi] += 1
    for gi, n in uncertain.items():
        if n > 1:
            bound *= factorial(s.groups[gi][1]) ** (n - 1)
    return bound


def ground(s: LiftedState, guard: int = DEFAULT_GUARD):
    """All ground states of ``s`` with their probabilities, sorted by state."""
    v = validate(s)
    if v is not None:
        raise InvalidState(f"cannot ground an invalid state (rule {v.rule}): {v.message}")
    b = s.bindings
    per_label = []
    for label, uses in sorted(s.label_refs().items()):
        allocs = list(_label_allocations(b[label], [((gi, slot), m) for gi, slot, m in uses]))
        per_label.append(allocs)
    out = Counter()
    count = 0
    for combo in itertools.product(*per_label):
        p = prod((q for _, q in combo), start=Fraction(1))
        assigned = {}
        for alloc, _ in combo:
            assigned.update(alloc)
        partial = [((), p)]
        for gi, (e, m) in enumerate(s.groups):
            slots = [slot for slot, _ in e]
            ms = [assigned[(gi, slot)] for slot in slots]
            options = list(_group_pairings(slots, ms, m))
            partial = [(acc + tuple(ents), q * r) for acc, q in partial for ents, r in options]
            count += len(partial)
            if count > guard:
                raise ExplosionGuard(count, guard)
        for ents, q in partial:
            out[tuple(sorted(ents))] += q
    return sorted(out.items())


# -- split / merge ----------------------------------------------------------

def _fresh(b, base):
    name = base + "'"
    while name in b:
        name += "'"
    return name


def _replace_label(e, slot, label):
    return tuple((sl, label if sl == slot else lb) for sl, lb in e)


def _split_label(s, label, slot, v):
    """Decide which entities draw ``v`` from ``label``; yields ``(weight, state)``."""
    b = dict(s.bindings)
    d = b[label]
    dirac_label = _fresh(b, label + "_" + v)
    b[dirac_label] = Dirac(v)
    rest_label = _fresh(b, label)
    if isinstance(d, Urn):
        uses = [(gi, sl, m) for gi, (e, m) in enumerate(s.groups) for sl, lb in e if lb == label]
        n, mv = d.size, d.multiplicity(v)
        k_total = sum(m for _, _, m in uses)
        rest = Urn(tuple((x, k) for x, k in d.items if x != v))
        for ks in itertools.product(*(range(min(m, mv) + 1) for _, _, m in uses)):
            tot = sum(ks)
            if tot > mv or mv - tot > n - k_total:
                continue
            w = Fraction(
                prod(comb(m, k) for (_, _, m), k in zip(uses, ks)) * comb(n - k_total, mv - tot),
                comb(n, mv),
            )
            yield w, _rebuild(s, b, label, rest_label, rest, dirac_label, uses, ks)
    else:
        uses = [(gi, sl, m) for gi, (e, m) in enumerate(s.groups) for sl, lb in e if lb == label and sl == slot]
        p = d.prob(v)
        rest = d.without(v)
        for ks in itertools.product(*(range(m + 1) for _, _, m in uses)):
            w = prod((comb(m, k) * p**k * (1 - p) ** (m - k) for (_, _, m), k in zip(uses, ks)), start=Fraction(1))
            yield w, _rebuild(s, b, label, rest_label, rest, dirac_label, uses, ks)


def _rebuild(s, b, label, rest_label, rest, dirac_label, uses, ks):
    taken = {gi: (sl, k) for (gi, sl, _), k in zip(uses, ks)}
    groups = []
    for gi, (e, m) in enumerate(s.groups):
        if gi not in taken:
            groups.append((e, m))
            continue
        sl, k = taken[gi]
        if m - k:
            groups.append((_replace_label(e, sl, rest_label), m - k))
        if k:
            groups.append((_replace_label(e, sl, dirac_label), k))
    ctx = dict(b)
    if rest.support():
        ctx[rest_label] = rest
    else:
        ctx.pop(rest_label, None)
    return LiftedState(tuple(groups), tuple(sorted(ctx.items())))


def slot_labels(s: LiftedState, slot: str):
    return sorted({lb for e, _ in s.groups for sl, lb in e if sl == slot})


def split_on_slot_value(s: LiftedState, slot: str, v: str):
    """Partition ``s`` so every branch decides which entities hold ``v`` in ``slot``.

    Returns ``[(weight, canonical_state)]`` with exact weights summing to one.
    For an urn label every referencing group is decided (the draws are
    dependent); for a categorical only the ``slot`` references are. A branch in
    which nobody holds ``v`` appears when ``v`` can stay in the urn or the
    categorical can miss it.
    """
    s = canonicalize(s)  # single-valued urns and categoricals become Diracs
    labels = slot_labels(s, slot)
    if not labels:
        raise SlotAbsent(f"no entity has slot {slot!r}")
    b = s.bindings
    if all(draw_probability(b[lb], v) == 0 for lb in labels):
        raise ValueImpossible(f"no label in slot {slot!r} can yield {v!r}")
    branches = [(Fraction(1), s)]
    for lb in labels:
        d = b[lb]
        if isinstance(d, Dirac) or draw_probability(d, v) == 0:
            continue
        branches = [(w * w2, s2) for w, st in branches for w2, s2 in _split_label(st, lb, slot, v)]
    merged = merge([(w, canonicalize(st)) for w, st in branches])
    return sorted(merged, key=lambda ws: (-ws[0], ws[1].sort_key))


def is_decided(s: LiftedState, slot: str, v: str) -> bool:
    """True when splitting on ``(slot, v)`` would be a no-op."""
    b = s.bindings
    for lb in slot_labels(s, slot):
        d = b[lb]
        if not isinstance(d, Dirac) and draw_probability(d, v) > 0:
            return False
    return True


def merge(weighted):
    """Combine canonically equal states by summing weights.

    Input states are canonicalised; output keeps first-occurrence order.
    """
    out = {}
    for w, st in weighted:
        st = canonicalize(st)
        out[st] = out.get(st, 0) + w
    return [(w, st) for st, w in out.items()]


def _parent_candidates(s, slots):
    b = s.bindings
    for slot in slots:
        labels = slot_labels(s, slot)
        urns = [lb for lb in labels if isinstance(b[lb], Urn)]
        holders = defaultdict(int)
        for e, m in s.groups:
            lb = dict(e).get(slot)
            if lb is not None and isinstance(b[lb], Dirac):
                holders[b[lb].value] += m
        values = sorted(holders)
        for v in values:
            for u in urns:
                yield _reinsert(s, slot, {v: holders[v]}, u), slot, v
            if not urns:
                for w in values:
                    if w > v:
                        yield _reinsert(s, slot, {v: holders[v], w: holders[w]}, None), slot, v


def _reinsert(s, slot, counts, urn_label):
    """Move every entity holding one of ``counts`` in ``slot`` back into an urn.

    Returns the canonical state, or just its descriptor form (a ``_Form``)
    when that is cheap to get; see ``_as_state``.
    """
    desc, n_urns = label_descs(s)
    if n_urns == 0 or (n_urns == 1 and urn_label is not None):
        return _reinsert_form(s, slot, counts, urn_label, desc)
    b = dict(s.bindings)
    if urn_label is None:
        urn_label = _fresh(b, "U")
        urn = Urn(())
    else:
        urn = b[urn_label]
    for v, c in counts.items():
        urn = dist.insert_value(urn, v, c)
    b[urn_label] = urn
    groups = []
    for e, m in s.groups:
        lb = dict(e).get(slot)
        if lb is not None and isinstance(b[lb], Dirac) and b[lb].value in counts:
            groups.append((_replace_label(e, slot, urn_label), m))
        else:
            groups.append((e, m))
    return canonicalize(LiftedState(tuple(groups), tuple(sorted(b.items()))))


def _reinsert_form(s, slot, counts, urn_label, desc):
    # the result has at most one urn, so its descriptor form is canonical
    urn = Urn(()) if urn_label is None else s.bindings[urn_label]
    for v, c in counts.items():
        urn = dist.insert_value(urn, v, c)
    urn = dist.normalize(urn)
    pooled = ("d", urn.value) if isinstance(urn, Dirac) else ("u", 0, urn.items)
    moved = {("d", v) for v in counts}
    if urn_label is not None:
        desc = dict(desc)
        desc[urn_label] = pooled
    entity_counts = []
    for e, m in s.groups:
        entity_counts.append((tuple(
            (sl, pooled if sl == slot and desc[lb] in moved else desc[lb]) for sl, lb in e
        ), m))
    fused = Counter()
    for e, m in entity_counts:
        fused[e] += m
    return _Form(sorted(fused.items()))


@lru_cache(maxsize=1 << 14)
def _split_cached(parent, slot, v):
    return tuple(split_on_slot_value(parent, slot, v))


@lru_cache(maxsize=1 << 16)
def _family_bound(parent, slot, v):
    """Number of allocation vectors splitting ``parent`` enumerates.

    Distinct vectors almost always give distinct canonical branches, so this
    is the family size except in rare symmetric cases, where it is larger.
    """
    b = parent.bindings
    refs = parent.label_refs()
    bound = 1
    for lb in slot_labels(parent, slot):
        d = b[lb]
        if isinstance(d, Dirac) or draw_probability(d, v) == 0:
            continue
        if isinstance(d, Urn):
            ms = [m for _, _, m in refs[lb]]
            n, mv, k_total = d.size, d.multiplicity(v), sum(ms)
            bound *= sum(
                1
                for ks in itertools.product(*(range(min(m, mv) + 1) for m in ms))
                if sum(ks) <= mv and mv - sum(ks) <= n - k_total
            )
        else:
            bound *= prod(m + 1 for _, sl, m in refs[lb] if sl == slot)
    return bound


def unsplit(weighted, slots=None):
    """Merge plus exact inverse splits, iterated to a fixpoint.

    When every branch of ``split_on_slot_value(parent, slot, v)`` is present,
    the largest common multiple ``r`` of the branch weights is moved into
    ``parent``: each branch keeps ``w_t - r * p_t`` and disappears at zero.
    This preserves the ground distribution exactly and is applied only when
    it lowers the hypothesis count (or re-pools a single-branch family).
    ``slots`` limits which slots are tried (default: all slots present).
    Returns ``(merged list, number of unsplits performed)``.
    """
    table = dict((st, w) for w, st in merge(weighted))
    slots = None if slots is None else tuple(slots)
    n_unsplit = 0
    index = defaultdict(list)      # key -> states that would re-pool into it
    by_parent = defaultdict(list)  # parent (form or state) -> keys

    def add(st):
        for key in _candidates_cached(st, slots):
            if key not in index:
                by_parent[key[0]].append(key)
            index[key].append(st)

    for st in sorted(table, key=lambda x: x.sort_key):
        add(st)
    pending = set(index)
    # a key's outcome depends only on its members' presence and weights and on
    # whether its parent is present, so after the first round only keys
    # touching a changed state need another look
    while pending:
        touched = set()
        for key in sorted(pending, key=lambda k: (_key_order(k[0]), k[1], k[2])):
            members = [st for st in index[key] if st in table]
            if not members:
                continue
            parent, slot, v = _as_state(key[0]), key[1], key[2]
            if parent in members:
                continue
            if _family_bound(parent, slot, v) > len(members):
                continue
            family = _split_cached(parent, slot, v)
            if any(t == parent for _, t in family):
                continue
            if not all(t in table for _, t in family):
                continue
            ratio = min(table[t] / w for w, t in family)
            vanish = sum(1 for w, t in family if table[t] == ratio * w)
            if parent not in table and vanish < min(2, len(family)):
                continue
            for w, t in family:
                rest = table[t] - ratio * w
                if rest:
                    table[t] = rest
                else:
                    del table[t]
                touched.add(t)
            if parent not in table:
                add(parent)
            table[parent] = table.get(parent, 0) + ratio
            touched.add(parent)
            n_unsplit += 1
        pending = set()
        for st in touched:
            pending.update(_candidates_cached(st, slots))
            pending.update(by_parent.get(_parent_id(st), ()))
            pending.update(by_parent.get(st, ()))
    return [(w, st) for st, w in table.items()], n_unsplit


def _parent_id(st):
    """The ``_Form`` under which ``st`` may appear as a candidate parent."""
    desc, n_urns = label_descs(st)
    return form_key(st.groups, desc) if n_urns <= 1 else st


def _as_state(parent):
    return from_form(parent) if isinstance(parent, _Form) else parent


def _key_order(parent):
    # forms and states never describe the same parent twice, so any fixed
    # order between the two kinds is deterministic
    return (0, parent.text()) if isinstance(parent, _Form) else (1, parent.sort_key)


@lru_cache(maxsize=1 << 16)
def _candidates_cached(st, slots):
    if slots is None:
        slots = sorted({sl for e, _ in st.groups for sl, _ in e})
    return tuple(_parent_candidates(st, slots))


_HOLE = ("h",)


class _Form(tuple):
    """A descriptor form with a cached hash (keys are hashed many times)."""

    def __hash__(self):
        h = self.__dict__.get("h")
        if h is None:
            h = self.__dict__["h"] = tuple.__hash__(self)
        return h

    def text(self):
        r = self.__dict__.get("r")
        if r is None:
            r = self.__dict__["r"] = repr(self)
        return r


def _hole_form(form, gi, slot):
    ent, _ = form[gi]
    ent = tuple((sl, _HOLE if sl == slot else d) for sl, d in ent)
    return _Form(sorted(form[:gi] + form[gi + 1:] + ((ent, 1),)))


def _fill_hole(form, d):
    d = dist.normalize(d)
    fill = ("d", d.value) if isinstance(d, Dirac) else ("c", d.probs)
    fused = Counter()
    for ent, m in form:
        fused[tuple((sl, fill if x == _HOLE else x) for sl, x in ent)] += m
    return from_form(tuple(sorted(fused.items())))


@lru_cache(maxsize=1 << 16)
def _factor_candidates(st, slots):
    """``(key, label distribution)`` per singleton entity slot of ``st``.

    The key is the descriptor form of ``st`` with that slot replaced by a
    hole; states with two or more urns are skipped.
    """
    st = canonicalize(st)
    desc, n_urns = label_descs(st)
    if n_urns > 1:
        return ()
    form = form_key(st.groups, desc)
    out = []
    for gi, (ent, m) in enumerate(form):
        if m != 1:
            continue
        for slot, d in ent:
            if slot in slots and d[0] in "dc":
                out.append((_hole_form(form, gi, slot), _from_desc(d)))
    return tuple(out)


def factor_merge(weighted, slots):
    """Merge states that differ only in one singleton entity's ``slot`` value.

    ``sum_i w_i * (R + e[slot ~ d_i])`` equals ``W * (R + e[slot ~ mix])``
    with ``W = sum_i w_i`` and ``mix = sum_i w_i d_i / W`` because a
    categorical label is drawn independently per reference; the merged
    entity gets a categorical label. Iterated to a fixpoint.
    Returns ``(merged list, number of merges)``.
    """
    slots = tuple(sorted(slots))
    table = dict((st, w) for w, st in merge(weighted))
    if not slots:
        return [(w, st) for st, w in table.items()], 0
    index = defaultdict(dict)
    fresh = sorted(table, key=lambda x: x.sort_key)
    n_merged = 0
    while fresh:
        touched = []
        for st in fresh:
            for key, d in _factor_candidates(st, slots):
                index[key].setdefault(st, d)
                touched.append(key)
        fresh = []
        for key in dict.fromkeys(touched):
            bucket = index[key]
            members = [(st, d) for st, d in bucket.items() if st in table]
            if len(members) < 2:
                continue
            total = sum(table[st] for st, _ in members)
            mix = defaultdict(Fraction)
            for st, d in members:
                w = table.pop(st)
                for v in d.support():
                    mix[v] += w * draw_probability(d, v)
            merged = _fill_hole(key, Categorical(tuple(sorted((v, p / total) for v, p in mix.items()))))
            if merged not in table:
                fresh.append(merged)
            table[merged] = table.get(merged, 0) + total
            n_merged += len(members) - 1
        fresh.sort(key=lambda x: x.sort_key)
    return [(w, st) for st, w in table.items()], n_merged


# -- queries ----------------------------------------------------------------

def marginal(s: LiftedState, selector_slot: str, selector_value: str, query_slot: str) -> dict:
    """Distribution of ``query_slot`` for the entity whose ``selector_slot``
    equals ``selector_value``; total mass is below one when no entity is
    guaranteed to hold the selector value."""
    try:
        branches = split_on_slot_value(s, selector_slot, selector_value)
    except (ValueImpossible, SlotAbsent):
        return {}
    out = Counter()
    for w, st in branches:
        b = st.bindings
        holders = []
        for e, m in st.groups:
            lb = dict(e).get(selector_slot)
            if lb is not None and b[lb] == Dirac(selector_value):
                holders.append((e, m))
        n = sum(m for _, m in holders)
        if n == 0:
            continue
        if n > 1:
            raise SelectorAmbiguous(f"{n} entities can hold {selector_slot}={selector_value}")
        ql = dict(holders[0][0]).get(query_slot)
        if ql is None:
            continue
        d = b[ql]
        for x in d.support():
            out[x] += w * draw_probability(d, x)
    return dict(sorted(out.items()))


def render(s: LiftedState) -> str:
    """Text form close to the usual notation, used for golden tests."""
    ents = ", ".join(
        f"{m}×⟨" + ", ".join(f"{slot}:{lb}" for slot, lb in e) + "⟩" for e, m in s.groups
    )
    ctx = ", ".join(f"{lb} ↦ {d}" for lb, d in s.context)
    return "{" + ents + "}\n[" + ctx + "]"


def to_json(s: LiftedState) -> dict:
    return {
        "entities": [{"count": m, "slots": dict(e)} for e, m in s.groups],
        "labels": {lb: dist.to_json(d) for lb, d in s.context},
    }
