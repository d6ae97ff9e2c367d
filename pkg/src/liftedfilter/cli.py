"""Command-line interface: ``liftedfilter {sample,filter,oracle,compare,validate}``.

Exit codes: 0 ok, 1 compare found a difference, 2 configuration/input error,
3 impossible observation, 4 explosion guard.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import scenarios
from .engine import FilterConfig, LiftedFilter
from .errors import ExplosionGuard, ImpossibleObservation, LiftedFilterError
from .oracle import GroundedFilter, compare
from .state import DEFAULT_GUARD

EXIT_OK, EXIT_DIFF, EXIT_CONFIG, EXIT_IMPOSSIBLE, EXIT_GUARD = 0, 1, 2, 3, 4
COMPARE_TOLERANCE = 1e-9

METRIC_FIELDS = ["engine", "t", "n_hyp_pre", "n_hyp_post_update", "n_hyp_post_predict",
                 "n_splits", "n_merges", "ms"]


class ConfigError(Exception):
    pass


def _diag(kind, message, **fields):
    print(json.dumps({"error": kind, "message": message, **fields}, sort_keys=True), file=sys.stderr)


def _param_value(text):
    for conv in (int, Fraction):
        try:
            return conv(text)
        except ValueError:
            pass
    return {"none": None, "None": None}.get(text, text)


def _scenario(args) -> scenarios.Scenario:
    if bool(args.scenario) == bool(args.scenario_file):
        raise ConfigError("give exactly one of --scenario or --scenario-file")
    if args.scenario_file:
        if args.param:
            raise ConfigError("--param only applies to builtin scenarios")
        return scenarios.load(args.scenario_file)
    params = {}
    for item in args.param or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        params[key.strip()] = _param_value(value.strip())
    try:
        return scenarios.builtin(args.scenario, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {args.scenario}: {exc}") from None


def _queries(args, sc):
    if args.query:
        return tuple(scenarios.parse_query(q) for q in args.query)
    return sc.queries


def _observations(args, sc):
    if (args.trace is None) == (args.seed is None):
        raise ConfigError("give exactly one of --trace or --seed")
    if args.trace is not None:
        _, observations, _ = scenarios.read_trace(args.trace)
        if args.horizon is not None:
            observations = observations[: args.horizon + 1]
    else:
        observations = scenarios.sample_trace(sc, args.seed, args.horizon).observations
    known = {s.id for s in sc.sensors}
    for t, obs in enumerate(observations):
        for sid, _ in obs.readings:
            if sid not in known:
                raise ConfigError(f"trace t={t}: unknown sensor {sid!r}")
    return observations


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _config(args, sc) -> FilterConfig:
    prune = Fraction(args.prune) if args.prune else None
    return FilterConfig(guard=args.guard, prune=prune, unsplit_slots=sc.identity_slots(),
                        factor_slots=sc.factor_slots(), workers=args.workers)


def _metric_row(engine, m, args):
    unmerged = getattr(args, "report", "merged") == "unmerged" and engine == "lifted"
    row = {
        "engine": engine,
        "t": m.t,
        "n_hyp_pre": m.n_hyp_pre,
        "n_hyp_post_update": m.n_hyp_post_update_unmerged if unmerged else m.n_hyp_post_update,
        "n_hyp_post_predict": m.n_hyp_post_predict_unmerged if unmerged else m.n_hyp_post_predict,
        "n_splits": getattr(m, "n_splits", 0),
        "n_merges": getattr(m, "n_merges", 0),
        "ms": f"{m.ms:.1f}" if args.timing else "",
    }
    return row


class _Writers:
    """Streams metrics (CSV + JSON lines) and marginals so partial runs survive errors."""

    def __init__(self, out: Path):
        self.files = [open(out / name, "w", newline="") for name in ("metrics.csv", "metrics.jsonl", "marginals.csv")]
        self.metrics = csv.DictWriter(self.files[0], METRIC_FIELDS, lineterminator="\n")
        self.metrics.writeheader()
        self.jsonl = self.files[1]
        self.marginals = csv.writer(self.files[2], lineterminator="\n")
        self.marginals.writerow(["engine", "query", "t", "value", "probability"])

    def write(self, engine, m, answers, args):
        row = _metric_row(engine, m, args)
        self.metrics.writerow(row)
        self.jsonl.write(json.dumps(row) + "\n")
        for q, dist in answers.items():
            for v, p in dist.items():
                self.marginals.writerow([engine, scenarios.format_query(q), m.t, v, repr(float(p))])

    def close(self):
        for f in self.files:
            f.close()


def _engines(args, sc):
    if args.engine in ("lifted", "both"):
        yield "lifted", LiftedFilter(sc, _config(args, sc))
    if args.engine in ("grounded", "both"):
        yield "grounded", GroundedFilter(sc, args.guard)


def _run_engine(name, engine, observations, queries, writers, args):
    t = 0
    try:
        for m, answers, _ in engine.run(observations, queries):
            t = m.t
            writers.write(name, m, answers, args)
    except ExplosionGuard as exc:
        at = exc.t if exc.t is not None else t
        _diag("ExplosionGuard", str(exc), engine=name, t=at, count=exc.count, limit=exc.limit)
        return EXIT_GUARD
    except ImpossibleObservation as exc:
        _diag("ImpossibleObservation", str(exc), engine=name, t=exc.t)
        return EXIT_IMPOSSIBLE
    return EXIT_OK


def cmd_sample(args):
    sc = _scenario(args)
    seed = 0 if args.seed is None else args.seed
    trace = scenarios.sample_trace(sc, seed, args.horizon)
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
    else:
        path = _out_dir(args) / f"{sc.name}-seed{seed}.trace"
    scenarios.write_trace(trace, path)
    print(f"wrote {path}: scenario={sc.name} seed={seed} horizon={trace.horizon}")
    for t, g in enumerate(trace.states):
        ents = "; ".join(",".join(f"{k}={v}" for k, v in e) for e in g)
        print(f"t={t} {ents}")
    return EXIT_OK


def cmd_filter(args):
    sc = _scenario(args)
    observations = _observations(args, sc)
    queries = _queries(args, sc)
    writers = _Writers(_out_dir(args))
    try:
        for name, engine in _engines(args, sc):
            code = _run_engine(name, engine, observations, queries, writers, args)
            if code:
                return code
    finally:
        writers.close()
    return EXIT_OK


def cmd_oracle(args):
    args.engine = "grounded"
    return cmd_filter(args)


def cmd_compare(args):
    sc = _scenario(args)
    observations = _observations(args, sc)
    queries = _queries(args, sc)
    out = _out_dir(args)
    runs = {}
    for name, engine in _engines(args, sc):
        try:
            runs[name] = list(engine.run(observations, queries))
        except ExplosionGuard as exc:
            _diag("ExplosionGuard", str(exc), engine=name, t=exc.t, count=exc.count, limit=exc.limit)
            return EXIT_GUARD
        except ImpossibleObservation as exc:
            _diag("ImpossibleObservation", str(exc), engine=name, t=exc.t)
            return EXIT_IMPOSSIBLE
    report = compare(runs["lifted"], runs["grounded"], queries)
    with open(out / "compare.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "max_abs_diff", "lifted_hyp_update", "grounded_hyp_update",
                    "lifted_hyp_predict", "grounded_hyp_predict"])
        for r in report.rows:
            w.writerow([r.t, repr(float(r.max_abs_diff)), r.lifted_hyp_update, r.grounded_hyp_update,
                        r.lifted_hyp_predict, r.grounded_hyp_predict])
    lifted_peak = max((max(r.lifted_hyp_update, r.lifted_hyp_predict) for r in report.rows), default=0)
    grounded_peak = max((max(r.grounded_hyp_update, r.grounded_hyp_predict) for r in report.rows), default=0)
    print(f"max_abs_diff={float(report.max_diff)!r} lifted_peak={lifted_peak} grounded_peak={grounded_peak}")
    if report.error:
        _diag("CompareMismatch", report.error)
        return EXIT_DIFF
    if report.max_diff > COMPARE_TOLERANCE:
        _diag("CompareMismatch", f"marginals differ by {float(report.max_diff)!r}")
        return EXIT_DIFF
    return EXIT_OK


def cmd_validate(args):
    sc = _scenario(args)
    print(f"scenario {sc.name}: {len(sc.locations)} locations, {len(sc.schemas)} schemas, "
          f"{len(sc.sensors)} sensors, {sum(st.size for _, st in sc.initial[:1])} entities")
    if args.trace:
        args.seed = None
        observations = _observations(args, sc)
        print(f"trace {args.trace}: {len(observations)} timesteps")
    return EXIT_OK


def _common(p, *, trace=True, engine=False):
    p.add_argument("--scenario", help="builtin scenario name (warehouse, office)")
    p.add_argument("--scenario-file", help="path to a .scn file")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="builtin scenario parameter")
    p.add_argument("--seed", type=int, help="sample the trace with this seed")
    p.add_argument("--horizon", type=int, help="last timestep (default: the scenario's)")
    if trace:
        p.add_argument("--trace", help="read observations from a .trace file")
    p.add_argument("--out-dir", default=".", help="directory for output files")
    p.add_argument("--query", action="append", metavar="SEL_SLOT=VAL:QUERY_SLOT")
    p.add_argument("--guard", type=int, default=DEFAULT_GUARD, metavar="N")
    p.add_argument("--prune", metavar="EPS", help="drop hypotheses below EPS (default off)")
    p.add_argument("--workers", type=int, default=1, help="processes for hypothesis expansion")
    p.add_argument("--timing", action="store_true", help="fill the ms column (outputs no longer reproducible)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--report-merged", dest="report", action="store_const", const="merged", default="merged")
    group.add_argument("--report-unmerged", dest="report", action="store_const", const="unmerged")
    if engine:
        p.add_argument("--engine", choices=["lifted", "grounded", "both"], default="lifted")


def build_parser():
    parser = argparse.ArgumentParser(prog="liftedfilter", description="Exact lifted Bayesian filtering")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sample", help="sample a ground-truth trace")
    _common(p, trace=False)
    p.add_argument("--out", help="trace file path (default: OUT_DIR/<scenario>-seed<seed>.trace)")
    p.set_defaults(func=cmd_sample)
    p = sub.add_parser("filter", help="run a filter over a trace")
    _common(p, engine=True)
    p.set_defaults(func=cmd_filter)
    p = sub.add_parser("oracle", help="run the grounded filter")
    _common(p)
    p.set_defaults(func=cmd_oracle, engine="grounded")
    p = sub.add_parser("compare", help="compare lifted and grounded marginals")
    _common(p)
    p.set_defaults(func=cmd_compare, engine="both")
    p = sub.add_parser("validate", help="validate a scenario (and optionally a trace)")
    _common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, LiftedFilterError, ValueError) as exc:
        _diag(type(exc).__name__, str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
