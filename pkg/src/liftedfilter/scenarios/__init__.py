"""Scenario definitions, the ``.scn``/``.trace`` file formats and trace sampling.

A scenario bundles a location graph, the initial lifted belief, action
schemas, sensors and a default horizon. Files are JSON documents carrying a
``format_version``; ``warehouse.scn`` and ``office.scn`` next to this module
are the bundled examples.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .. import distributions as dist
from ..actions import (
    ActionSchema,
    Consume,
    Constraint,
    Produce,
    RemoveSlot,
    SetSlot,
    _apply_counts,
    _components,
    _instance_types,
    _local_compounds,
)
from ..distributions import Urn
from ..errors import LiftedFilterError, ParseError, UnknownScenario, ValidationError
from ..observations import Observation, SensorSpec
from ..state import LiftedState, canonicalize, ground, lift_ground, validate
from ..state import to_json as state_to_json

FORMAT_VERSION = 1
HERE = Path(__file__).parent


@dataclass
class Scenario:
    name: str
    locations: tuple
    edges: tuple
    slots: tuple
    initial: list          # [(Fraction weight, LiftedState)]
    schemas: list
    sensors: list
    horizon: int = 20
    location_slot: str = "loc"
    params: dict = field(default_factory=dict)
    queries: tuple = ()    # ((selector_slot, selector_value, query_slot), ...)

    def identity_slots(self) -> tuple:
        """Slots worth re-pooling into urns when merging hypotheses."""
        slots = {s.id_slot for s in self.sensors if s.kind == "identify"}
        for _, st in self.initial:
            b = st.bindings
            for e, _ in st.groups:
                slots.update(slot for slot, lb in e if isinstance(b[lb], Urn))
        return tuple(sorted(slots))

    def factor_slots(self) -> tuple:
        """Slots whose per-entity values may be folded into categoricals."""
        ident = set(self.identity_slots())
        return tuple(s for s in self.slots if s not in ident)

    def neighbours(self, loc):
        return sorted({b for a, b in self.edges if a == loc} | {a for a, b in self.edges if b == loc})

    def sensor(self, sid) -> SensorSpec:
        for s in self.sensors:
            if s.id == sid:
                return s
        raise KeyError(sid)


# -- (de)serialisation --------------------------------------------------------

def parse_query(text: str) -> tuple:
    """``"ID=fl1:loc"`` -> ``("ID", "fl1", "loc")``."""
    try:
        sel, qslot = text.split(":")
        slot, value = sel.split("=")
    except ValueError:
        raise ParseError(f"query must look like SEL_SLOT=VALUE:QUERY_SLOT, got {text!r}") from None
    return slot.strip(), value.strip(), qslot.strip()


def format_query(q) -> str:
    return f"{q[0]}={q[1]}:{q[2]}"


def _constraint_from(obj, where):
    try:
        return Constraint(obj["slot"], obj.get("op", "eq"), obj["value"])
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{where}: bad constraint {obj!r}") from exc


def _effect_from(obj, where):
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ParseError(f"{where}: effect must be a one-key object, got {obj!r}")
    (kind, arg), = obj.items()
    try:
        if kind == "set":
            copy = tuple(arg["copy"]) if "copy" in arg else None
            return SetSlot(int(arg["participant"]), arg["slot"], arg.get("value"), copy)
        if kind == "remove":
            return RemoveSlot(int(arg["participant"]), arg["slot"])
        if kind == "consume":
            return Consume(int(arg))
        if kind == "produce":
            tmpl = []
            for slot, src in sorted(arg.items()):
                if "value" in src:
                    tmpl.append((slot, ("value", src["value"])))
                else:
                    tmpl.append((slot, ("copy", tuple(src["copy"]))))
            return Produce(tuple(tmpl))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: bad {kind} effect {arg!r}") from exc
    raise ParseError(f"{where}: unknown effect kind {kind!r}")


def _effect_to(eff):
    if isinstance(eff, SetSlot):
        d = {"participant": eff.participant, "slot": eff.slot}
        if eff.copy is not None:
            d["copy"] = list(eff.copy)
        else:
            d["value"] = eff.value
        return {"set": d}
    if isinstance(eff, RemoveSlot):
        return {"remove": {"participant": eff.participant, "slot": eff.slot}}
    if isinstance(eff, Consume):
        return {"consume": eff.participant}
    return {"produce": {slot: ({"value": src[1]} if src[0] == "value" else {"copy": list(src[1])})
                        for slot, src in eff.template}}


def _state_from(obj, where):
    try:
        labels = {lb: dist.from_json(d) for lb, d in obj["labels"].items()}
        groups = [(e["slots"], int(e.get("count", 1))) for e in obj["entities"]]
    except (KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"{where}: hypothesis needs 'entities' and 'labels'") from exc
    st = LiftedState.build(groups, labels)
    v = validate(st)
    if v is not None:
        raise ValidationError(f"{where}: invalid lifted state (rule {v.rule}): {v.message}")
    return st


def from_dict(doc: dict, source="<scenario>") -> Scenario:
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: top level must be an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"{source}: unsupported format_version {doc.get('format_version')!r}")
    try:
        if "initial" in doc:
            initial = [
                (Fraction(str(h.get("weight", 1))), _state_from(h, f"{source}: initial[{i}]"))
                for i, h in enumerate(doc["initial"])
            ]
        else:
            initial = [(Fraction(1), _state_from(doc, f"{source}: entities"))]
        schemas = []
        for i, sd in enumerate(doc.get("schemas", [])):
            where = f"{source}: schemas[{i}] ({sd.get('name', '?')})"
            pre = tuple(tuple(_constraint_from(c, where) for c in part) for part in sd["participants"])
            effects = tuple(_effect_from(e, where) for e in sd.get("effects", []))
            schemas.append(ActionSchema(sd["name"], pre, effects, Fraction(str(sd.get("rate", 1)))))
        sensors = [
            SensorSpec(s["id"], s["kind"], s["slot"], s["value"],
                       Fraction(str(s.get("fp", 0))), Fraction(str(s.get("fn", 0))), s.get("id_slot", "ID"))
            for s in doc.get("sensors", [])
        ]
        sc = Scenario(
            name=doc["name"],
            locations=tuple(doc["locations"]),
            edges=tuple(tuple(e) for e in doc.get("edges", [])),
            slots=tuple(doc["slots"]),
            initial=initial,
            schemas=schemas,
            sensors=sensors,
            horizon=int(doc.get("horizon", 20)),
            location_slot=doc.get("location_slot", "loc"),
            params=dict(doc.get("params", {})),
            queries=tuple(parse_query(q) for q in doc.get("queries", [])),
        )
    except KeyError as exc:
        raise ParseError(f"{source}: missing field {exc}") from exc
    except ValidationError as exc:
        raise ValidationError(f"{source}: {exc}") from exc
    check(sc, source)
    return sc


def to_dict(sc: Scenario) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "name": sc.name,
        "params": sc.params,
        "horizon": sc.horizon,
        "location_slot": sc.location_slot,
        "locations": list(sc.locations),
        "edges": [list(e) for e in sc.edges],
        "slots": list(sc.slots),
        "initial": [dict(weight=str(w), **state_to_json(st)) for w, st in sc.initial],
        "schemas": [
            {
                "name": s.name,
                "rate": str(s.rate),
                "participants": [[c.to_json() for c in part] for part in s.preconditions],
                "effects": [_effect_to(e) for e in s.effects],
            }
            for s in sc.schemas
        ],
        "sensors": [s.to_json() for s in sc.sensors],
        "queries": [format_query(q) for q in sc.queries],
    }


def check(sc: Scenario, source="<scenario>"):
    """Raise :class:`ValidationError` on the first broken scenario invariant."""
    locs = set(sc.locations)
    for a, b in sc.edges:
        if a not in locs or b not in locs:
            raise ValidationError(f"{source}: edge {a}-{b} uses an undeclared location")
    if locs:
        seen, todo = set(), [sc.locations[0]]
        while todo:
            x = todo.pop()
            if x not in seen:
                seen.add(x)
                todo.extend(sc.neighbours(x))
        if seen != locs:
            raise ValidationError(f"{source}: location graph is not connected ({sorted(locs - seen)} unreachable)")
    slots = set(sc.slots)
    if not sc.initial:
        raise ValidationError(f"{source}: empty initial belief")
    for i, (w, st) in enumerate(sc.initial):
        if w <= 0:
            raise ValidationError(f"{source}: initial[{i}] weight must be positive")
        for e, _ in st.groups:
            for slot, _ in e:
                if slot not in slots:
                    raise ValidationError(f"{source}: initial[{i}] uses undeclared slot {slot!r}")
    adjacent = set(sc.edges) | {(b, a) for a, b in sc.edges}
    for s in sc.schemas:
        where = f"{source}: schema {s.name!r}"
        for part in s.preconditions:
            for c in part:
                if c.slot not in slots:
                    raise ValidationError(f"{where} constrains undeclared slot {c.slot!r}")
        for eff in s.effects:
            named = []
            if isinstance(eff, (SetSlot, RemoveSlot)):
                named.append(eff.slot)
            if isinstance(eff, SetSlot) and eff.copy is not None:
                named.append(eff.copy[1])
            if isinstance(eff, Produce):
                named.extend(slot for slot, _ in eff.template)
                named.extend(src[1][1] for _, src in eff.template if src[0] == "copy")
            for slot in named:
                if slot not in slots:
                    raise ValidationError(f"{where} effect uses undeclared slot {slot!r}")
        for a, b in move_pairs(s, sc.location_slot):
            if a != b and (a, b) not in adjacent:
                raise ValidationError(f"{where} moves {a}->{b} between unconnected locations")
    for s in sc.sensors:
        if s.watched_slot not in slots or (s.kind == "identify" and s.id_slot not in slots):
            raise ValidationError(f"{source}: sensor {s.id!r} watches an undeclared slot")
    for q in sc.queries:
        if q[0] not in slots or q[2] not in slots:
            raise ValidationError(f"{source}: query {format_query(q)} uses undeclared slots")


def move_pairs(schema: ActionSchema, loc_slot="loc"):
    """``(from, to)`` location pairs a schema can move a participant along."""
    out = []
    for eff in schema.effects:
        if isinstance(eff, SetSlot) and eff.slot == loc_slot and eff.value is not None:
            for c in schema.preconditions[eff.participant]:
                if c.slot == loc_slot and c.op == "eq":
                    out.append((c.operand, eff.value))
    return out


def load(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    return from_dict(doc, str(path))


def dump(sc: Scenario, path):
    Path(path).write_text(json.dumps(to_dict(sc), indent=1, sort_keys=False) + "\n")


# -- builtin scenarios --------------------------------------------------------

def _eq(slot, value):
    return Constraint(slot, "eq", value)


def _movement(locations, edges, extra=(), stay_names=None):
    stay_names = stay_names or {}
    schemas = []
    for loc in locations:
        schemas.append(ActionSchema(stay_names.get(loc, f"stay_{loc}"), ((_eq("loc", loc), *extra),)))
    for a, b in edges:
        for x, y in ((a, b), (b, a)):
            schemas.append(ActionSchema(f"move_{x}_{y}", ((_eq("loc", x), *extra),), (SetSlot(0, "loc", y),)))
    return schemas


WAREHOUSE_LOCATIONS = ("parking", "service", "stor1", "stor2", "stor3")
WAREHOUSE_EDGES = (
    ("parking", "stor2"), ("stor1", "stor2"), ("stor2", "stor3"), ("service", "stor2"), ("parking", "stor3"),
)


def _distances(locations, edges, source):
    adj = {x: set() for x in locations}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    dist_, frontier = {source: 0}, [source]
    while frontier:
        nxt = []
        for x in frontier:
            for y in sorted(adj[x]):
                if y not in dist_:
                    dist_[y] = dist_[x] + 1
                    nxt.append(y)
        frontier = nxt
    return dist_, adj


def _shift_schemas(locations, edges, home, period, stay_names):
    """Movement gated by a per-entity ``phase`` slot cycling through ``period``
    values; a move is only allowed if ``home`` stays reachable before the
    phase wraps, so every entity is back home at phase 0."""
    d, adj = _distances(locations, edges, home)
    schemas = []
    for p in range(period):
        nxt = (p + 1) % period
        budget = period - p - 1
        for x in locations:
            if d[x] > budget + 1:
                continue
            for y in [x] + sorted(adj[x]):
                if d[y] > budget:
                    continue
                pre = ((_eq("loc", x), _eq("phase", str(p))),)
                eff = (SetSlot(0, "phase", str(nxt)),)
                if y == x:
                    name = stay_names.get(x, f"stay_{x}")
                else:
                    name = f"move_{x}_{y}"
                    eff = (SetSlot(0, "loc", y),) + eff
                schemas.append(ActionSchema(f"{name}@{p}", pre, eff))
    return schemas


def warehouse(n=10, horizon=33, fp=0, fn=0, period=10) -> Scenario:
    """Forklifts parked together, anonymous presence sensors in every room
    and an identifying sensor at the service station.

    With ``period`` set, forklifts work in shifts: each carries a ``phase``
    slot and must be back at parking every ``period`` steps. ``period=None``
    gives an unconstrained random walk.
    """
    ids = [f"fl{i}" for i in range(1, n + 1)]
    slots = {"loc": "LPark", "ID": "LID"}
    labels = {"LPark": dist.Dirac("parking"), "LID": dist.Urn.of(ids)}
    stay_names = {"service": "refuel"}
    if period:
        if period < 2 * max(_distances(WAREHOUSE_LOCATIONS, WAREHOUSE_EDGES, "parking")[0].values()):
            raise ValidationError(f"period {period} too short to visit every location")
        slots["phase"] = "LPhase"
        labels["LPhase"] = dist.Dirac("0")
        schemas = _shift_schemas(WAREHOUSE_LOCATIONS, WAREHOUSE_EDGES, "parking", period, stay_names)
    else:
        schemas = _movement(WAREHOUSE_LOCATIONS, WAREHOUSE_EDGES, stay_names=stay_names)
    init = LiftedState.build([(slots, n)], labels)
    sensors = [SensorSpec(f"presence_{loc}", "presence", "loc", loc, fp, fn) for loc in WAREHOUSE_LOCATIONS]
    sensors.append(SensorSpec("identify_service", "identify", "loc", "service", fp, fn, "ID"))
    return Scenario(
        name="warehouse",
        locations=WAREHOUSE_LOCATIONS,
        edges=WAREHOUSE_EDGES,
        slots=tuple(sorted(slots)),
        initial=[(Fraction(1), canonicalize(init))],
        schemas=schemas,
        sensors=sensors,
        horizon=horizon,
        params={"n": n, "fp": str(fp), "fn": str(fn), "period": period},
        queries=(("ID", "fl1", "loc"),),
    )


OFFICE_LOCATIONS = ("office", "kitchen", "printer")
OFFICE_EDGES = (("office", "kitchen"), ("office", "printer"))


def office(n=3, jobs=2, items="full", horizon=20, fp=0, fn=0) -> Scenario:
    """Persons fetching coffee and printouts; identified while at the printer.

    ``items="reduced"`` drops the coffee chain and keeps paper/printing only.
    """
    if items not in ("full", "reduced"):
        raise ValidationError(f"office items must be 'full' or 'reduced', got {items!r}")
    ids = [f"p{i}" for i in range(1, n + 1)]
    person = (_eq("hold", "none"),)
    at = lambda loc: _eq("loc", loc)  # noqa: E731
    schemas = _movement(OFFICE_LOCATIONS, OFFICE_EDGES)
    carried = ["paper", "document"]
    if items == "full":
        carried = ["water", "ground", "coffee"] + carried
        schemas += [
            ActionSchema("take_water", ((at("kitchen"), *person),), (SetSlot(0, "hold", "water"),)),
            ActionSchema("take_ground", ((at("kitchen"), *person),), (SetSlot(0, "hold", "ground"),)),
            ActionSchema("fill_water",
                         ((at("kitchen"), _eq("hold", "water")), (_eq("dev", "machine"), _eq("water", "no"))),
                         (SetSlot(0, "hold", "none"), SetSlot(1, "water", "yes"))),
            ActionSchema("fill_ground",
                         ((at("kitchen"), _eq("hold", "ground")), (_eq("dev", "machine"), _eq("beans", "no"))),
                         (SetSlot(0, "hold", "none"), SetSlot(1, "beans", "yes"))),
            ActionSchema("brew",
                         ((at("kitchen"), *person),
                          (_eq("dev", "machine"), _eq("water", "yes"), _eq("beans", "yes"))),
                         (SetSlot(0, "hold", "coffee"), SetSlot(1, "water", "no"), SetSlot(1, "beans", "no"))),
        ]
    schemas += [
        ActionSchema("take_paper", ((at("printer"), *person),), (SetSlot(0, "hold", "paper"),)),
        ActionSchema("load_printer",
                     ((at("printer"), _eq("hold", "paper")), (_eq("dev", "printer"), _eq("paper", "no"))),
                     (SetSlot(0, "hold", "none"), SetSlot(1, "paper", "yes"))),
        ActionSchema("print",
                     ((at("printer"), *person), (_eq("dev", "printer"), _eq("paper", "yes")),
                      (_eq("job", "pending"),)),
                     (SetSlot(0, "hold", "document"), SetSlot(1, "paper", "no"), Consume(2))),
        ActionSchema("putdown", ((at("office"), Constraint("hold", "in", frozenset(carried))),),
                     (SetSlot(0, "hold", "none"),)),
    ]
    groups = [({"loc": "LOffice", "ID": "LID", "hold": "LNone"}, n),
              ({"dev": "LPrinter", "paper": "LNo"}, 1)]
    labels = {"LOffice": dist.Dirac("office"), "LID": dist.Urn.of(ids), "LNone": dist.Dirac("none"),
              "LPrinter": dist.Dirac("printer"), "LNo": dist.Dirac("no")}
    slots = ["ID", "dev", "hold", "loc", "paper"]
    if items == "full":
        groups.append(({"dev": "LMachine", "water": "LNo", "beans": "LNo"}, 1))
        labels["LMachine"] = dist.Dirac("machine")
        slots += ["beans", "water"]
    if jobs:
        groups.append(({"job": "LPending"}, jobs))
        labels["LPending"] = dist.Dirac("pending")
        slots.append("job")
    sensors = [SensorSpec(f"presence_{loc}", "presence", "loc", loc, fp, fn) for loc in OFFICE_LOCATIONS]
    sensors.append(SensorSpec("identify_printer", "identify", "loc", "printer", fp, fn, "ID"))
    return Scenario(
        name="office",
        locations=OFFICE_LOCATIONS,
        edges=OFFICE_EDGES,
        slots=tuple(sorted(slots)),
        initial=[(Fraction(1), canonicalize(LiftedState.build(groups, labels)))],
        schemas=schemas,
        sensors=sensors,
        horizon=horizon,
        params={"n": n, "jobs": jobs, "items": items, "fp": str(fp), "fn": str(fn)},
        queries=(("ID", "p1", "hold"),),
    )


BUILTINS = {"warehouse": warehouse, "office": office}


def builtin(name: str, **params) -> Scenario:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**params)


def bundled_path(name: str) -> Path:
    return HERE / f"{name}.scn"


# -- traces -------------------------------------------------------------------

@dataclass
class GroundTruthTrace:
    scenario: str
    seed: int
    states: list          # ground states, one per timestep
    observations: list    # Observation per timestep
    params: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.states) - 1


def sample_ground(st: LiftedState, rng: random.Random):
    """Draw one ground state from a lifted state."""
    b = st.bindings
    values = {}
    for label, uses in sorted(st.label_refs().items()):
        d = b[label]
        k = sum(m for _, _, m in uses)
        if isinstance(d, dist.Dirac):
            draws = [d.value] * k
        elif isinstance(d, dist.Urn):
            draws = rng.sample(d.values(), k)
        else:
            vals = [v for v, _ in d.probs]
            draws = rng.choices(vals, weights=[float(p) for _, p in d.probs], k=k)
        it = iter(draws)
        for gi, slot, m in uses:
            values[(gi, slot)] = [next(it) for _ in range(m)]
    ents = []
    for gi, (e, m) in enumerate(st.groups):
        for j in range(m):
            ents.append(tuple(sorted((slot, values[(gi, slot)][j]) for slot, _ in e)))
    return tuple(sorted(ents))


def _pick(rng, weighted):
    u = Fraction(rng.random())
    acc = Fraction(0)
    for item, w in weighted:
        acc += w
        if u < acc:
            return item
    return weighted[-1][0]


def sample_transition(g, schemas, rng: random.Random):
    """One maximal parallel step sampled by weight, independently per component."""
    st = lift_ground(g)
    types = _instance_types(st, schemas)
    mult = [m for _, m in st.groups]
    chosen = []
    for comp in _components(st, types):
        local = _local_compounds(comp, mult, schemas)
        z = sum(w for _, w in local)
        counts = _pick(rng, [(c, w / z) for c, w in local])
        chosen.extend((t, n) for t, n in zip(comp, counts) if n)
    out, residual, extra = _apply_counts(st, schemas, chosen)
    for gi, n in residual.items():
        if n:
            out[st.groups[gi][0]] += n
    ctx = dict(st.bindings)
    ctx.update(extra)
    nxt = LiftedState(tuple(sorted(out.items())), tuple(sorted(ctx.items())))
    (h, _), = ground(canonicalize(nxt))
    return h


def sample_observation(g, sensors, rng: random.Random) -> Observation:
    readings = {}
    for s in sensors:
        here = [dict(e) for e in g if dict(e).get(s.watched_slot) == s.watched_value]
        if s.kind == "presence":
            p = 1 - s.false_negative if here else s.false_positive
            readings[s.id] = rng.random() < p
        else:
            seen = set()
            for e in (dict(x) for x in g):
                if s.id_slot not in e:
                    continue
                at = e.get(s.watched_slot) == s.watched_value
                if rng.random() < (1 - s.false_negative if at else s.false_positive):
                    seen.add(e[s.id_slot])
            readings[s.id] = frozenset(seen)
    return Observation.of(readings)


def sample_trace(sc: Scenario, seed: int, horizon: int | None = None) -> GroundTruthTrace:
    """Ground truth and observations for timesteps ``0..horizon``."""
    horizon = sc.horizon if horizon is None else horizon
    rng = random.Random(seed)
    st = _pick(rng, [(s, w / sum(x for x, _ in sc.initial)) for w, s in sc.initial])
    g = sample_ground(st, rng)
    states, obs = [g], [sample_observation(g, sc.sensors, rng)]
    for _ in range(horizon):
        g = sample_transition(g, sc.schemas, rng)
        states.append(g)
        obs.append(sample_observation(g, sc.sensors, rng))
    return GroundTruthTrace(sc.name, seed, states, obs, dict(sc.params))


def write_trace(trace: GroundTruthTrace, path):
    lines = [json.dumps({"format_version": FORMAT_VERSION, "scenario": trace.scenario,
                         "params": trace.params, "seed": trace.seed, "horizon": trace.horizon})]
    for t, (g, o) in enumerate(zip(trace.states, trace.observations)):
        lines.append(json.dumps({"t": t, "sensors": o.to_json(), "truth": [dict(e) for e in g]}, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path):
    """Return ``(header, observations, truths)``; header and truths may be empty."""
    header, observations, truths = {}, [], []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: {exc.msg}") from exc
        if "t" not in rec:
            if rec.get("format_version") != FORMAT_VERSION:
                raise ParseError(f"{path}:{lineno}: unsupported format_version")
            header = rec
            continue
        if rec["t"] != len(observations):
            raise ParseError(f"{path}:{lineno}: expected t={len(observations)}, got {rec['t']}")
        observations.append(Observation.of(rec["sensors"]))
        if "truth" in rec:
            truths.append(tuple(sorted(tuple(sorted(e.items())) for e in rec["truth"])))
    return header, observations, truths


__all__ = [
    "Scenario", "GroundTruthTrace", "builtin", "load", "dump", "from_dict", "to_dict", "check",
    "warehouse", "office", "sample_trace", "sample_ground", "sample_transition", "sample_observation",
    "write_trace", "read_trace", "parse_query", "format_query", "move_pairs", "bundled_path",
    "LiftedFilterError",
]
