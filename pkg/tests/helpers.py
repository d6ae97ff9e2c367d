"""Shared builders and hypothesis strategies for the test suite."""
from collections import Counter
from fractions import Fraction

from hypothesis import assume, strategies as st

from liftedfilter.actions import ActionSchema, Consume, Constraint, Produce, SetSlot
from liftedfilter.distributions import Categorical, Dirac, Urn
from liftedfilter.state import LiftedState, ground, ground_count_bound, validate

IDS10 = [f"fl{i}" for i in range(1, 11)]


def forklifts_split(n=10, a="storage1", b="storage2"):
    """n-1 forklifts in ``a``, one in ``b``, IDs from one urn."""
    return LiftedState.build(
        [({"loc": "LStor1", "ID": "LID"}, n - 1), ({"loc": "LStor2", "ID": "LID"}, 1)],
        {"LID": Urn.of(IDS10[:n]), "LStor1": Dirac(a), "LStor2": Dirac(b)},
    )


def forklifts_together(n=10, a="storage1"):
    return LiftedState.build(
        [({"loc": "LStor1", "ID": "LID"}, n)],
        {"LID": Urn.of(IDS10[:n]), "LStor1": Dirac(a)},
    )


def fl1_broken_out_at_stor1():
    rest = Urn.of(IDS10[1:])
    return LiftedState.build(
        [({"loc": "LStor1", "ID": "LIDa"}, 8), ({"loc": "LStor1", "ID": "LIDb"}, 1),
         ({"loc": "LStor2", "ID": "LIDa"}, 1)],
        {"LIDa": rest, "LIDb": Dirac("fl1"), "LStor1": Dirac("storage1"), "LStor2": Dirac("storage2")},
    )


def fl1_broken_out_at_stor2():
    rest = Urn.of(IDS10[1:])
    return LiftedState.build(
        [({"loc": "LStor1", "ID": "LIDa"}, 9), ({"loc": "LStor2", "ID": "LIDb"}, 1)],
        {"LIDa": rest, "LIDb": Dirac("fl1"), "LStor1": Dirac("storage1"), "LStor2": Dirac("storage2")},
    )


def ground_mix(weighted):
    """Weighted union of grounds as ``{ground_state: probability}``."""
    out = Counter()
    for w, s in weighted:
        for g, p in ground(s):
            out[g] += Fraction(w) * p
    return {g: p for g, p in out.items() if p}


def rename(s: LiftedState, prefix="X", reverse=False) -> LiftedState:
    """Same state with every label renamed and the group order changed."""
    names = {lb: f"{prefix}{i}" for i, (lb, _) in enumerate(s.context)}
    groups = [(tuple(sorted((slot, names[lb]) for slot, lb in e)), m) for e, m in s.groups]
    if reverse:
        groups.reverse()
    ctx = tuple(sorted((names[lb], d) for lb, d in s.context))
    return LiftedState(tuple(groups), ctx)


# -- random states --------------------------------------------------------------

LOCS = ("a", "b", "c")
NAMES = ("p", "q", "r", "s", "t")


def _dist(kind, draw, pool):
    if kind == "dirac":
        return Dirac(draw(st.sampled_from(pool)))
    if kind == "urn":
        values = draw(st.lists(st.sampled_from(pool), min_size=1, max_size=5))
        return Urn.of(values)
    support = draw(st.lists(st.sampled_from(pool), min_size=1, max_size=3, unique=True))
    weights = draw(st.lists(st.integers(1, 4), min_size=len(support), max_size=len(support)))
    total = sum(weights)
    return Categorical(tuple(sorted((v, Fraction(w, total)) for v, w in zip(support, weights))))


@st.composite
def lifted_states(draw, max_grounds=10**4, slots=("loc", "ID")):
    """Valid lifted states over ``slots`` with at most ``max_grounds`` grounds.

    Labels are shared between groups at random, so urn draws are coupled
    across groups, and slots can be missing from some entities.
    """
    n_labels = draw(st.integers(1, 4))
    ctx = {}
    for i in range(n_labels):
        kind = draw(st.sampled_from(("dirac", "urn", "cat")))
        pool = LOCS if i % 2 == 0 else NAMES
        ctx[f"L{i}"] = _dist(kind, draw, pool)
    groups = []
    for _ in range(draw(st.integers(1, 3))):
        present = draw(st.lists(st.sampled_from(slots), min_size=1, max_size=len(slots), unique=True))
        ent = {slot: draw(st.sampled_from(sorted(ctx))) for slot in present}
        groups.append((ent, draw(st.integers(1, 3))))
    used = {lb for e, _ in groups for lb in e.values()}
    s = LiftedState.build(groups, {lb: d for lb, d in ctx.items() if lb in used})
    assume(validate(s) is None)
    assume(ground_count_bound(s) <= max_grounds)
    return s


def slot_value_pairs(s: LiftedState):
    """Every ``(slot, value)`` some label of ``s`` can produce."""
    b = s.bindings
    out = set()
    for e, _ in s.groups:
        for slot, lb in e:
            for v in b[lb].support():
                out.add((slot, v))
    return sorted(out)


# -- random schemas -------------------------------------------------------------

@st.composite
def constraints(draw):
    slot = draw(st.sampled_from(("loc", "ID")))
    pool = LOCS if slot == "loc" else NAMES
    op = draw(st.sampled_from(("eq", "neq", "in")))
    if op == "in":
        return Constraint(slot, op, frozenset(draw(st.lists(st.sampled_from(pool), min_size=1, max_size=2))))
    return Constraint(slot, op, draw(st.sampled_from(pool)))


@st.composite
def schemas(draw, allow_structural=True):
    """A small schema; unary or binary, with value-setting effects and
    optionally consume/produce/copy."""
    arity = draw(st.integers(1, 2))
    pre = tuple(tuple(draw(st.lists(constraints(), min_size=1, max_size=2))) for _ in range(arity))
    effects = [SetSlot(0, "loc", draw(st.sampled_from(LOCS)))]
    if allow_structural:
        extra = draw(st.sampled_from(("none", "consume", "produce", "copy")))
        if extra == "consume" and arity == 2:
            effects.append(Consume(1))
        elif extra == "produce":
            effects.append(Produce((("loc", ("value", draw(st.sampled_from(LOCS)))),)))
        elif extra == "copy" and arity == 2:
            # the copied slot must exist on participant 0
            pre = (pre[0] + (Constraint("loc", "in", frozenset(LOCS)),),) + pre[1:]
            effects.append(SetSlot(1, "loc", copy=(0, "loc")))
    rate = draw(st.sampled_from((Fraction(1), Fraction(2), Fraction(1, 2))))
    name = draw(st.text("xyz", min_size=1, max_size=3))
    return ActionSchema(name, pre, tuple(effects), rate)

