from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from liftedfilter.distributions import (
    UNBOUNDED,
    Categorical,
    Dirac,
    Urn,
    capacity,
    draw_probability,
    enumerate_draws,
    from_json,
    insert_value,
    normalize,
    remove_value,
    to_json,
)
from liftedfilter.errors import CapacityExceeded, ParseError, ValueAbsent

IDS = [f"fl{i}" for i in range(1, 11)]


def test_capacity():
    assert capacity(Urn.of(IDS)) == 10
    assert capacity(Dirac("storage1")) == UNBOUNDED
    assert capacity(Urn.of("aab")) == 3
    assert capacity(Categorical.of({"a": 0.5, "b": 0.5})) == UNBOUNDED


def test_draw_probability():
    assert draw_probability(Urn.of(IDS), "fl1") == Fraction(1, 10)
    assert draw_probability(Dirac("storage1"), "storage1") == 1
    assert draw_probability(Dirac("storage1"), "storage2") == 0
    assert draw_probability(Urn.of("aab"), "a") == Fraction(2, 3)
    assert draw_probability(Categorical.of({"a": 0.25, "b": 0.75}), "b") == Fraction(3, 4)


def test_remove_value():
    assert remove_value(Urn.of(IDS), "fl1") == Urn.of(IDS[1:])
    assert remove_value(Urn.of("aab"), "a") == Urn.of("ab")
    with pytest.raises(ValueAbsent):
        remove_value(Urn.of("a"), "b")


def test_enumerate_draws_examples():
    assert enumerate_draws(Urn.of("xy"), 2) == [(("x", "y"), Fraction(1, 2)), (("y", "x"), Fraction(1, 2))]
    assert enumerate_draws(Dirac("s"), 3) == [(("s", "s", "s"), 1)]
    third = Fraction(1, 3)
    assert enumerate_draws(Urn.of("aab"), 2) == [(("a", "a"), third), (("a", "b"), third), (("b", "a"), third)]
    with pytest.raises(CapacityExceeded):
        enumerate_draws(Urn.of("ab"), 3)


def test_categorical_validation():
    with pytest.raises(ValueError):
        Categorical.of({"a": 0.5, "b": 0.4})
    with pytest.raises(ValueError):
        Categorical(())
    c = Categorical.of({"a": 0.1, "b": 0.2, "c": 0.7})
    assert c.prob("a") == Fraction(1, 10)
    assert c.without("c") == Categorical.of({"a": Fraction(1, 3), "b": Fraction(2, 3)})


def test_normalize_collapses_single_values():
    assert normalize(Urn.of("aa")) == Dirac("a")
    assert normalize(Categorical.of({"a": 1})) == Dirac("a")
    assert normalize(Urn.of("ab")) == Urn.of("ab")


def test_json_round_trip():
    for d in (Dirac("storage1"), Urn.of(["fl1", "fl2", "fl2"]), Categorical.of({"a": 0.5, "b": 0.5})):
        assert from_json(to_json(d)) == d
    assert from_json({"cat": {"a": "1/3", "b": "2/3"}}) == Categorical.of({"a": Fraction(1, 3), "b": Fraction(2, 3)})


@pytest.mark.parametrize("bad", [{"urn": []}, {"gauss": [0, 1]}, {"dirac": "a", "urn": ["b"]}, [1], {"cat": {"a": 0.2}}])
def test_json_rejects(bad):
    with pytest.raises(ParseError):
        from_json(bad)


# -- properties --------------------------------------------------------------

values = st.sampled_from("abcd")
urns = st.lists(values, min_size=1, max_size=6).map(Urn.of)
cats = st.dictionaries(values, st.integers(1, 5), min_size=1).map(
    lambda m: Categorical.of({k: Fraction(v, sum(m.values())) for k, v in m.items()})
)
dists = st.one_of(values.map(Dirac), urns, cats)


@given(dists)
def test_draw_probabilities_sum_to_one(d):
    assert sum(draw_probability(d, v) for v in d.support()) == 1


@given(urns, st.integers(1, 3))
def test_first_draw_marginal_matches_draw_probability(u, k):
    if k > u.size:
        return
    draws = enumerate_draws(u, k)
    assert sum(p for _, p in draws) == 1
    for v in u.support():
        assert sum(p for t, p in draws if t[0] == v) == draw_probability(u, v)


@given(urns, values)
def test_remove_then_insert_is_identity(u, v):
    if u.multiplicity(v):
        assert insert_value(remove_value(u, v), v) == u


@given(cats, st.integers(0, 3))
def test_categorical_draws_sum_to_one(c, k):
    assert sum(p for _, p in enumerate_draws(c, k)) == 1
