import itertools
from fractions import Fraction

import pytest

from helpers import forklifts_split, ground_mix
from liftedfilter.actions import ActionSchema, Constraint, SetSlot
from liftedfilter.distributions import Dirac, Urn
from liftedfilter.engine import LiftedFilter
from liftedfilter.errors import ExplosionGuard, ImpossibleObservation, InvalidState
from liftedfilter.observations import Observation
from liftedfilter.oracle import (
    GroundedFilter,
    compare,
    ground_initial,
    ground_predict,
    ground_update,
    maximal_steps,
    transition,
)
from liftedfilter.scenarios import Scenario, sample_trace, warehouse
from liftedfilter.state import LiftedState, canonicalize


def _scenario(initial, schemas=(), sensors=()):
    return Scenario(
        name="mini", locations=("a", "b"), edges=(("a", "b"),), slots=("ID", "loc"),
        initial=[(Fraction(1), canonicalize(initial))], schemas=list(schemas), sensors=list(sensors),
        horizon=3, location_slot="loc", params={}, queries=(("ID", "fl1", "loc"),),
    )


def test_ground_initial_ten_states():
    b = ground_initial(_scenario(forklifts_split()))
    assert len(b) == 10 and set(b.values()) == {Fraction(1, 10)}


def test_ground_initial_all_dirac():
    s = LiftedState.build([({"loc": "A"}, 2)], {"A": Dirac("a")})
    assert list(ground_initial(_scenario(s)).values()) == [1]


def test_ground_initial_guard():
    with pytest.raises(ExplosionGuard) as exc:
        ground_initial(_scenario(forklifts_split()), guard=3)
    assert exc.value.count > 3


def test_deterministic_chain_stays_a_point_mass():
    s = LiftedState.build([({"loc": "A"}, 1)], {"A": Dirac("a")})
    flip = [ActionSchema("ab", ((Constraint("loc", "eq", "a"),),), (SetSlot(0, "loc", "b"),)),
            ActionSchema("ba", ((Constraint("loc", "eq", "b"),),), (SetSlot(0, "loc", "a"),))]
    b = ground_initial(_scenario(s))
    for expected in "babab":
        b = ground_predict(b, flip)
        assert b == {(((("loc", expected),),)): 1}


def _brute_maximal(g, schemas):
    """Subsets of all instances that are disjoint and cannot be extended."""
    inds = [dict(e) for e in g]
    insts = []
    for k, sc in enumerate(schemas):
        for combo in itertools.permutations(range(len(inds)), sc.arity):
            if all(all(c.slot in inds[i] and c.holds(inds[i][c.slot]) for c in cons)
                   for i, cons in zip(combo, sc.preconditions)):
                insts.append((k, combo))
    found = set()
    for r in range(len(insts) + 1):
        for sub in itertools.combinations(insts, r):
            used = [j for _, m in sub for j in m]
            if len(used) != len(set(used)):
                continue
            if any(not set(m) & set(used) for _, m in insts if (_, m) not in sub):
                continue
            found.add(tuple(sorted(sub)))
    return found


def test_maximal_steps_match_brute_force():
    sc = warehouse(n=3, period=None)
    g = (
        (("ID", "fl1"), ("loc", "stor2")),
        (("ID", "fl2"), ("loc", "stor2")),
        (("ID", "fl3"), ("loc", "parking")),
    )
    fast = {tuple(sorted(step)) for step, _ in maximal_steps(g, sc.schemas)}
    assert fast == _brute_maximal(g, sc.schemas)
    assert sum(transition(g, sc.schemas).values()) == 1


def test_ground_update_contradiction():
    sc = warehouse(n=3)
    b = ground_initial(sc)
    with pytest.raises(ImpossibleObservation):
        ground_update(b, Observation.of({"presence_stor1": True}), sc.sensors, t=0)


def test_grounded_count_is_distinct_states():
    sc = warehouse(n=3, horizon=6)
    obs = sample_trace(sc, 4).observations
    for m, _, b in GroundedFilter(sc).run(obs):
        assert m.n_hyp_post_update == len(b) == len(set(b))
        assert sum(b.values()) == 1


def test_compare_identical_runs_and_lengths():
    sc = warehouse(n=3, horizon=5)
    obs = sample_trace(sc, 6).observations
    lifted = list(LiftedFilter(sc).run(obs, sc.queries))
    grounded = list(GroundedFilter(sc).run(obs, sc.queries))
    report = compare(lifted, grounded, sc.queries)
    assert report.max_diff == 0 and not report.error
    assert report.lifted_never_larger
    short = compare(lifted[:-1], grounded, sc.queries)
    assert "length mismatch" in short.error


def test_horizon_zero_compare():
    sc = warehouse(n=3)
    obs = sample_trace(sc, 0, 0).observations
    assert len(obs) == 1
    report = compare(LiftedFilter(sc).run(obs, sc.queries), GroundedFilter(sc).run(obs, sc.queries), sc.queries)
    assert report.max_diff == 0


def test_lifted_belief_grounds_to_oracle_belief():
    sc = warehouse(n=3, horizon=8)
    obs = sample_trace(sc, 9).observations
    for (_, _, lb), (_, _, gb) in zip(LiftedFilter(sc).run(obs), GroundedFilter(sc).run(obs)):
        assert ground_mix(lb.weighted()) == gb


def test_invalid_initial_state_is_rejected():
    s = LiftedState.build([({"ID": "U"}, 11)], {"U": Urn.of([f"fl{i}" for i in range(1, 11)])})
    with pytest.raises(InvalidState):
        ground_initial(_scenario(s))
