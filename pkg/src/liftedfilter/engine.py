"""The lifted Bayesian filter: update, query, predict over lifted belief states."""
from __future__ import annotations

import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache
from fractions import Fraction
from math import lcm

from .actions import predict_counts
from .errors import ExplosionGuard, ImpossibleObservation
from .observations import likelihood_update
from .state import DEFAULT_GUARD, canonicalize, factor_merge, ground, ground_count_bound, lift_ground, marginal, render, unsplit


class LiftedBeliefState:
    """Probability map over canonical lifted states.

    Weights are exact fractions, strictly positive, summing to one.
    """

    def __init__(self, hypotheses):
        self.hypotheses = dict(hypotheses)

    @classmethod
    def from_weighted(cls, weighted) -> "LiftedBeliefState":
        table = {}
        for w, st in weighted:
            w = Fraction(w)
            if w <= 0:
                continue
            st = canonicalize(st)
            table[st] = table.get(st, 0) + w
        total = sum(table.values())
        return cls({st: w / total for st, w in _sorted(table.items())})

    def __len__(self):
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses.items())

    def weighted(self):
        return [(w, st) for st, w in self.hypotheses.items()]

    def digest(self) -> str:
        h = hashlib.sha256()
        for st, w in _sorted(self.hypotheses.items()):
            h.update(render(st).encode())
            h.update(str(w).encode())
        return h.hexdigest()

    def __str__(self):
        return "\n".join(f"{w} × {render(st)}" for st, w in self.hypotheses.items())


def _sorted(items):
    return sorted(items, key=lambda kv: kv[0].sort_key)


@dataclass
class Metrics:
    t: int
    n_hyp_pre: int = 0
    n_hyp_post_update: int = 0
    n_hyp_post_predict: int = 0
    n_hyp_post_update_unmerged: int = 0
    n_hyp_post_predict_unmerged: int = 0
    n_splits: int = 0
    n_merges: int = 0
    ms: float = 0.0

    def as_dict(self):
        return asdict(self)


@dataclass
class FilterConfig:
    guard: int = DEFAULT_GUARD
    prune: Fraction | None = None
    unsplit_slots: tuple | None = None
    factor_slots: tuple = ()
    # the factor merge pays for itself only on large beliefs: merged labels
    # are split again by the next update or action test
    factor_above: int = 5000
    workers: int = 1
    reground_budget: int = 2000


@lru_cache(maxsize=1 << 15)
def _ground_small(st, budget):
    return tuple(ground(st, budget))


def _reground(merged, budget):
    """All-Dirac rewrite of ``merged`` if its ground support is smaller.

    Returns ``None`` when the support is larger or too costly to enumerate.
    """
    total = 0
    for _, st in merged:
        total += ground_count_bound(st)
        if total > budget:
            return None
    support = {}
    try:
        for w, st in merged:
            for g, p in _ground_small(st, budget):
                support[g] = support.get(g, 0) + w * p
    except ExplosionGuard:
        return None
    if len(support) >= len(merged):
        return None
    return [(p, lift_ground(g)) for g, p in sorted(support.items())]


def _normalize_and_merge(weighted, config, stats, t, phase):
    n_raw = len({st for _, st in weighted})
    merged, _ = unsplit(weighted, config.unsplit_slots)
    if config.factor_slots and len(merged) > config.factor_above:
        merged, _ = factor_merge(merged, config.factor_slots)
    if config.reground_budget and len(merged) > 1:
        rewritten = _reground(merged, config.reground_budget)
        if rewritten is not None:
            merged, _ = unsplit(rewritten, config.unsplit_slots)
    merged = [(w, st) for w, st in merged if w > 0]
    total = sum(w for w, _ in merged)
    if total == 0:
        raise ImpossibleObservation(t)
    merged = [(w / total, st) for w, st in merged]
    if config.prune:
        kept = [(w, st) for w, st in merged if w >= config.prune]
        if kept:
            total = sum(w for w, _ in kept)
            merged = [(w / total, st) for w, st in kept]
    stats.n_merges += len(weighted) - len(merged)
    setattr(stats, f"n_hyp_post_{phase}_unmerged", n_raw)
    if len(merged) > config.guard:
        raise ExplosionGuard(len(merged), config.guard, t)
    return LiftedBeliefState({st: w for st, w in _sorted((st, w) for w, st in merged)})


def _update_one(args):
    st, w, obs, sensors = args
    return [(w * w2, s2) for w2, s2 in likelihood_update(st, obs, sensors)]


def _predict_one(args):
    st, w, schemas = args
    return predict_counts(st, schemas, w)


def _fan_out(fn, jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def update(b: LiftedBeliefState, obs, sensors, config=None, stats=None, t=None) -> LiftedBeliefState:
    """Weight each hypothesis by the observation likelihood, splitting where
    sensors need decided slots, then merge and renormalise."""
    config = config or FilterConfig()
    stats = stats or Metrics(t or 0)
    jobs = [(st, w, obs, tuple(sensors)) for st, w in b]
    weighted = [x for part in _fan_out(_update_one, jobs, config.workers) for x in part]
    stats.n_splits += max(0, len(weighted) - len(jobs))
    try:
        return _normalize_and_merge(weighted, config, stats, t, "update")
    except ImpossibleObservation as exc:
        raise ImpossibleObservation(t, "every hypothesis contradicts the observation") from exc


def predict(b: LiftedBeliefState, schemas, config=None, stats=None, t=None) -> LiftedBeliefState:
    """Apply every maximal compound action to every hypothesis and merge."""
    config = config or FilterConfig()
    stats = stats or Metrics(t or 0)
    jobs = [(st, w, tuple(schemas)) for st, w in b]
    parts = _fan_out(_predict_one, jobs, config.workers)
    # sum integer numerators over one common denominator, then build each
    # successor's Fraction once
    common = lcm(*(d for _, d, _ in parts))
    acc = {}
    for counts, d, n_splits in parts:
        stats.n_splits += n_splits
        f = common // d
        for st, k in counts.items():
            acc[st] = acc.get(st, 0) + k * f
    weighted = [(Fraction(k, common), st) for st, k in acc.items()]
    return _normalize_and_merge(weighted, config, stats, t, "predict")


def query(b: LiftedBeliefState, selector_slot, selector_value, query_slot) -> dict:
    """Marginal of ``query_slot`` for the entity selected by ``selector_slot=selector_value``.

    The belief is not modified.
    """
    out = {}
    for st, w in b:
        for v, p in marginal(st, selector_slot, selector_value, query_slot).items():
            out[v] = out.get(v, 0) + w * p
    return dict(sorted(out.items()))


def step(b, obs, schemas, sensors, config=None, t=0, queries=(), predict_next=True):
    """One filter cycle: update with ``obs``, answer ``queries``, predict.

    Returns ``(updated, predicted, metrics, answers)``; ``predicted`` is
    ``None`` when ``predict_next`` is false.
    """
    config = config or FilterConfig()
    stats = Metrics(t, n_hyp_pre=len(b))
    t0 = time.perf_counter()
    updated = update(b, obs, sensors, config, stats, t)
    stats.n_hyp_post_update = len(updated)
    answers = {q: query(updated, *q) for q in queries}
    predicted = None
    if predict_next:
        predicted = predict(updated, schemas, config, stats, t)
        stats.n_hyp_post_predict = len(predicted)
    stats.ms = (time.perf_counter() - t0) * 1000
    return updated, predicted, stats, answers


class LiftedFilter:
    """Runs the filter over an observation sequence for a scenario."""

    engine = "lifted"

    def __init__(self, scenario, config=None):
        self.scenario = scenario
        self.config = config or FilterConfig(
            unsplit_slots=scenario.identity_slots(), factor_slots=scenario.factor_slots()
        )

    def initial(self) -> LiftedBeliefState:
        return LiftedBeliefState.from_weighted(self.scenario.initial)

    def run(self, observations, queries=()):
        """Yield ``(metrics, answers, belief)`` per timestep."""
        b = self.initial()
        last = len(observations) - 1
        for t, obs in enumerate(observations):
            updated, predicted, stats, answers = step(
                b, obs, self.scenario.schemas, self.scenario.sensors, self.config, t, queries, t < last
            )
            yield stats, answers, updated
            b = predicted
