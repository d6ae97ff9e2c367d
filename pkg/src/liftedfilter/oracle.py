"""Grounded forward filter used as correctness oracle and as baseline.

Ground states are sorted tuples of entities (sorted ``(slot, value)``
tuples). Transitions enumerate, per ground state, every maximal set of
disjoint schema instances over individual entities by brute force; a set's
weight is the product of its instance rates. Nothing here reuses the lifted
split, grounding-by-allocation or compound counting code.
"""
from __future__ import annotations

import itertools
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from .actions import apply_effects
from .errors import ExplosionGuard, ImpossibleObservation
from .state import DEFAULT_GUARD, ground


def ground_initial(scenario, guard=DEFAULT_GUARD) -> dict:
    """Weighted union of the grounds of every initial hypothesis."""
    out = Counter()
    total = sum(Fraction(w) for w, _ in scenario.initial)
    for w, st in scenario.initial:
        for g, p in ground(st, guard):
            out[g] += Fraction(w) / total * p
            if len(out) > guard:
                raise ExplosionGuard(len(out), guard, 0)
    return dict(sorted(out.items()))


# -- observation likelihood on ground states --------------------------------

def presence_lik(g, spec, reading):
    occupied = any(dict(e).get(spec.watched_slot) == spec.watched_value for e in g)
    if reading:
        return 1 - spec.false_negative if occupied else spec.false_positive
    return spec.false_negative if occupied else 1 - spec.false_positive


def identify_lik(g, spec, ids):
    fp, fn = spec.false_positive, spec.false_negative
    silent = {}
    for e in g:
        ent = dict(e)
        if spec.id_slot not in ent:
            continue
        here = ent.get(spec.watched_slot) == spec.watched_value
        v = ent[spec.id_slot]
        silent[v] = silent.get(v, Fraction(1)) * (fn if here else 1 - fp)
    lik = Fraction(1)
    for v, q in silent.items():
        lik *= (1 - q) if v in ids else q
    if any(v not in silent for v in ids):
        return Fraction(0)
    return lik


def likelihood(g, obs, sensors):
    readings = dict(obs.readings)
    lik = Fraction(1)
    for spec in sensors:
        if spec.id not in readings:
            continue
        r = readings[spec.id]
        lik *= presence_lik(g, spec, r) if spec.kind == "presence" else identify_lik(g, spec, r)
        if not lik:
            break
    return lik


def ground_update(b: dict, obs, sensors, t=None) -> dict:
    out = {}
    for g, p in b.items():
        q = p * likelihood(g, obs, sensors)
        if q:
            out[g] = q
    total = sum(out.values())
    if not total:
        raise ImpossibleObservation(t, "grounded belief has zero mass")
    return {g: q / total for g, q in out.items()}


# -- transitions --------------------------------------------------------------

def _instances(inds, schemas):
    out = []
    for k, schema in enumerate(schemas):
        for combo in itertools.permutations(range(len(inds)), schema.arity):
            if all(
                all(c.slot in inds[i] and c.holds(inds[i][c.slot]) for c in cons)
                for i, cons in zip(combo, schema.preconditions)
            ):
                out.append((k, combo))
    return out


def _maximal(n, insts):
    """Every maximal set of pairwise disjoint instances over ``n`` individuals."""
    by_min = [[] for _ in range(n)]
    by_max = [[] for _ in range(n)]
    for inst in insts:
        by_min[min(inst[1])].append(inst)
        by_max[max(inst[1])].append(inst)
    used = [False] * n
    idle = [False] * n
    chosen = []

    def rec(i):
        if i == n:
            yield tuple(chosen)
            return
        if used[i]:
            yield from rec(i + 1)
            return
        # leaving i idle is allowed unless an instance ending at i has only idle members
        idle[i] = True
        if not any(all(idle[j] for j in members) for _, members in by_max[i]):
            yield from rec(i + 1)
        idle[i] = False
        for inst in by_min[i]:
            members = inst[1]
            if any(used[j] or idle[j] for j in members):
                continue
            for j in members:
                used[j] = True
            chosen.append(inst)
            yield from rec(i + 1)
            chosen.pop()
            for j in members:
                used[j] = False

    return rec(0)


def _rate(schema):
    r = Fraction(schema.rate)
    return r.numerator if r.denominator == 1 else r


def maximal_steps(g, schemas):
    """Yield ``(instances, weight)`` for every maximal parallel step of ``g``."""
    inds = [dict(e) for e in g]
    rates = [_rate(sc) for sc in schemas]
    for step in _maximal(len(inds), _instances(inds, schemas)):
        w = 1
        for k, _ in step:
            w *= rates[k]
        yield step, w


def _outputs(inds, inst, schemas):
    k, members = inst
    out = apply_effects(schemas[k], [inds[i] for i in members], lambda v: v)
    return tuple(tuple(sorted(e.items())) for e in out)


def apply_step(g, step, schemas):
    inds = [dict(e) for e in g]
    taken = set()
    out = []
    for inst in step:
        taken.update(inst[1])
        out.extend(_outputs(inds, inst, schemas))
    out.extend(g[i] for i in range(len(g)) if i not in taken)
    return tuple(sorted(out))


def transition(g, schemas):
    """Successor distribution of one ground state."""
    out = Counter()
    for step, w in maximal_steps(g, schemas):
        out[apply_step(g, step, schemas)] += w
    z = sum(out.values())
    return {h: Fraction(w) / z for h, w in out.items()}


def ground_predict(b: dict, schemas, guard=DEFAULT_GUARD, t=None) -> dict:
    """One grounded transition of the whole belief.

    ``guard`` caps the ground successor states enumerated in the step (the
    sparse transition table, summed over source states), which bounds both
    time and memory.
    """
    schemas = list(schemas)
    rates = [_rate(sc) for sc in schemas]
    out = Counter()
    enumerated = 0  # ground successor states generated so far in this step
    for g, p in b.items():
        inds = [dict(e) for e in g]
        insts = _instances(inds, schemas)
        outputs = {inst: _outputs(inds, inst, schemas) for inst in insts}
        succ = Counter()
        n = len(g)
        for step in _maximal(n, insts):
            w = 1
            taken = [False] * n
            ents = []
            for inst in step:
                w *= rates[inst[0]]
                for j in inst[1]:
                    taken[j] = True
                ents.extend(outputs[inst])
            ents.extend(g[j] for j in range(n) if not taken[j])
            h = tuple(sorted(ents))
            if h not in succ and enumerated + len(succ) >= guard:
                raise ExplosionGuard(enumerated + len(succ) + 1, guard, t)
            succ[h] += w
        enumerated += len(succ)
        z = sum(succ.values())
        for h, w in succ.items():
            out[h] += p * w / z
    return dict(sorted(out.items()))


def ground_step(b, obs, schemas, sensors, guard=DEFAULT_GUARD, t=None):
    """Observation update followed by one transition."""
    return ground_predict(ground_update(b, obs, sensors, t), schemas, guard, t)


def ground_marginal(b: dict, selector_slot, selector_value, query_slot) -> dict:
    out = Counter()
    for g, p in b.items():
        for e in g:
            ent = dict(e)
            if ent.get(selector_slot) == selector_value and query_slot in ent:
                out[ent[query_slot]] += p
    return dict(sorted(out.items()))


# -- runs and comparison ------------------------------------------------------

@dataclass
class GroundMetrics:
    t: int
    n_hyp_pre: int = 0
    n_hyp_post_update: int = 0
    n_hyp_post_predict: int = 0
    ms: float = 0.0


class GroundedFilter:
    engine = "grounded"

    def __init__(self, scenario, guard=DEFAULT_GUARD):
        self.scenario = scenario
        self.guard = guard

    def run(self, observations, queries=()):
        """Yield ``(metrics, answers, belief)`` per timestep."""
        b = ground_initial(self.scenario, self.guard)
        last = len(observations) - 1
        for t, obs in enumerate(observations):
            t0 = time.perf_counter()
            m = GroundMetrics(t, n_hyp_pre=len(b))
            b = ground_update(b, obs, self.scenario.sensors, t)
            m.n_hyp_post_update = len(b)
            answers = {q: ground_marginal(b, *q) for q in queries}
            updated = b
            if t < last:
                b = ground_predict(b, self.scenario.schemas, self.guard, t)
                m.n_hyp_post_predict = len(b)
            m.ms = (time.perf_counter() - t0) * 1000
            yield m, answers, updated


@dataclass
class CompareRow:
    t: int
    max_abs_diff: Fraction
    lifted_hyp_update: int
    grounded_hyp_update: int
    lifted_hyp_predict: int
    grounded_hyp_predict: int


@dataclass
class CompareReport:
    rows: list = field(default_factory=list)
    error: str = ""

    @property
    def max_diff(self):
        return max((r.max_abs_diff for r in self.rows), default=Fraction(0))

    @property
    def lifted_never_larger(self) -> bool:
        return all(
            r.lifted_hyp_update <= r.grounded_hyp_update and r.lifted_hyp_predict <= r.grounded_hyp_predict
            for r in self.rows
        )


def compare(lifted_run, ground_run, queries=()) -> CompareReport:
    """Per-timestep marginal differences and hypothesis counts of two runs.

    Runs are sequences of ``(metrics, answers, belief)`` as yielded by the
    filters' ``run`` methods.
    """
    lifted_run, ground_run = list(lifted_run), list(ground_run)
    report = CompareReport()
    if len(lifted_run) != len(ground_run):
        report.error = f"length mismatch: lifted {len(lifted_run)} vs grounded {len(ground_run)}"
    for (lm, la, _), (gm, ga, _) in zip(lifted_run, ground_run):
        diff = Fraction(0)
        for q in queries:
            a, c = la.get(q, {}), ga.get(q, {})
            for v in set(a) | set(c):
                diff = max(diff, abs(Fraction(a.get(v, 0)) - Fraction(c.get(v, 0))))
        report.rows.append(CompareRow(
            lm.t, diff, lm.n_hyp_post_update, gm.n_hyp_post_update,
            lm.n_hyp_post_predict, gm.n_hyp_post_predict,
        ))
    return report
