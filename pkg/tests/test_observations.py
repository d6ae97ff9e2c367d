from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from helpers import (
    IDS10,
    fl1_broken_out_at_stor2,
    forklifts_split,
    forklifts_together,
    ground_mix,
    lifted_states,
)
from liftedfilter.distributions import Dirac, Urn
from liftedfilter.errors import ValidationError
from liftedfilter.observations import (
    Observation,
    SensorSpec,
    SplitRequest,
    decide,
    identify_likelihood_update,
    likelihood_update,
    presence_likelihood,
)
from liftedfilter.oracle import likelihood as ground_likelihood
from liftedfilter.state import LiftedState, canonicalize, ground

STOR2 = SensorSpec("presence_storage2", "presence", "loc", "storage2")
IDENT2 = SensorSpec("identify_storage2", "identify", "loc", "storage2")


def test_presence_examples():
    assert presence_likelihood(forklifts_together(), STOR2, True) == 0
    assert presence_likelihood(forklifts_split(), STOR2, True) == 1
    noisy = SensorSpec("p", "presence", "loc", "storage2", false_positive=Fraction(1, 20))
    assert presence_likelihood(forklifts_together(), noisy, True) == Fraction(1, 20)
    assert presence_likelihood(forklifts_together(), noisy, False) == Fraction(19, 20)


def test_presence_requests_split_when_undecided():
    s = LiftedState.build([({"loc": "U"}, 1)], {"U": Urn.of(["storage1", "storage2"])})
    assert presence_likelihood(s, STOR2, True) == SplitRequest("loc", "storage2")
    branches = decide(s, STOR2, True)
    assert sorted(w for w, _ in branches) == [Fraction(1, 2)] * 2


def test_sensor_noise_bounds():
    with pytest.raises(ValidationError):
        SensorSpec("p", "presence", "loc", "x", false_negative=Fraction(1, 2))
    with pytest.raises(ValidationError):
        SensorSpec("p", "smell", "loc", "x")


def test_identify_keeps_only_fl1_at_storage2():
    out = identify_likelihood_update(forklifts_split(), IDENT2, {"fl1"})
    assert out == [(Fraction(1, 10), canonicalize(fl1_broken_out_at_stor2()))]


def test_identify_empty_reading_with_nobody_there():
    s = canonicalize(forklifts_together())
    assert identify_likelihood_update(s, IDENT2, set()) == [(1, s)]


def test_identify_contradiction():
    s = canonicalize(fl1_broken_out_at_stor2())
    station1 = SensorSpec("identify_storage1", "identify", "loc", "storage1")
    assert identify_likelihood_update(s, station1, {"fl1"}) == []


def test_observation_json():
    obs = Observation.of({"presence_a": True, "identify_b": ["fl2", "fl1"]})
    assert obs.to_json() == {"identify_b": ["fl1", "fl2"], "presence_a": True}
    assert obs["identify_b"] == frozenset({"fl1", "fl2"})


# -- properties --------------------------------------------------------------

probs = st.sampled_from([Fraction(0), Fraction(1, 20), Fraction(1, 5), Fraction(2, 5)])
sensor_kinds = st.sampled_from(["presence", "identify"])


@st.composite
def sensors(draw):
    kind = draw(sensor_kinds)
    return SensorSpec(f"{kind}_{draw(st.sampled_from('abc'))}", kind, "loc", draw(st.sampled_from("abc")),
                      draw(probs), draw(probs))


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.filter_too_much, HealthCheck.too_slow])
@given(lifted_states(max_grounds=2000), sensors(), st.data())
def test_likelihood_commutes_with_grounding(s, spec, data):
    if spec.kind == "presence":
        reading = data.draw(st.booleans())
    else:
        reading = frozenset(data.draw(st.lists(st.sampled_from("pqrst"), max_size=2)))
    obs = Observation.of({spec.id: reading})
    lifted = likelihood_update(s, obs, [spec])
    expected = {}
    for g, p in ground(s):
        q = p * ground_likelihood(g, obs, [spec])
        if q:
            expected[g] = q
    assert ground_mix(lifted) == expected


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.filter_too_much, HealthCheck.too_slow])
@given(lifted_states(max_grounds=2000), st.sampled_from("abc"))
def test_presence_true_plus_false_is_one(s, loc):
    spec = SensorSpec("p", "presence", "loc", loc, Fraction(1, 10), Fraction(1, 5))
    total = Fraction(0)
    for reading in (True, False):
        total += sum(w for w, _ in likelihood_update(s, Observation.of({"p": reading}), [spec]))
    assert total == 1


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.filter_too_much, HealthCheck.too_slow])
@given(lifted_states(max_grounds=2000), st.sampled_from("abc"), st.lists(st.sampled_from("pqrst"), max_size=2))
def test_noise_free_identify_never_adds_grounds(s, loc, ids):
    spec = SensorSpec("i", "identify", "loc", loc)
    out = identify_likelihood_update(s, spec, frozenset(ids))
    assert set(ground_mix(out)) <= {g for g, _ in ground(s)}
