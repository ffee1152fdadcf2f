"""Command-line front end.

Subcommands cover the whole loop: generate a corpus, plan it, evaluate the
itineraries, benchmark parallel day planning, run ablation arms, and replay
multi-turn scenarios.

Exit codes: 0 on success, 1 for usage problems, 2 for I/O or schema problems.

Determinism contract: with equal inputs, flags, and seed, every artifact is
byte-identical across runs. Wall-clock measurements therefore never mix into
the planning artifacts; they land in a separate timings.json (and bench.json,
whose whole point is timing). The seed is recorded in every artifact. The
seed may also come from the HIMAP_SEED environment variable or a --config
file; explicit flags win over both.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .evaluator import EvalReport, aggregate, evaluate, failed_report
from .generate import (
    FLEX_SHAPES,
    GeneratedCorpus,
    GenerationError,
    InfeasibleTier,
    MultiTurnScenario,
    NothingToRemove,
    TIER_MARGINS,
    flex_eligible,
    generate_bargaining_adversarial,
    generate_flex_scenarios,
    generate_instances,
)
from .orchestrator import SessionConfig, SessionResult, benchmark, plan, run_flex_scenario
from .policies import DuplicatePronePolicy, GreedyPolicy
from .sandbox.database import MissingFile, SchemaViolation, load_database, save_database
from .sandbox.types import DayPlan, TravelQuery, validate_query

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

SEED_ENV = "HIMAP_SEED"

_ABLATION_ARMS = (
    "full",
    "no_monitor",
    "no_coordinator",
    "no_bargaining",
    "no_parallel",
)

_POLICIES = {
    "greedy": GreedyPolicy,
    "duplicate-prone": DuplicatePronePolicy,
}


class DataError(Exception):
    """Bad input data: missing file, unparseable JSON, schema violation."""


class UsageError(Exception):
    """Bad invocation outside what argparse can catch (e.g. a broken env var)."""


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; the contract reserves 2 for
    data problems, so usage errors are remapped to 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Small I/O helpers
# ---------------------------------------------------------------------------


def _write_json(path: Path, doc: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_jsonl(path: Path, docs: Sequence[dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(doc, sort_keys=True, separators=(",", ":")) for doc in docs]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None


def _load_queries(path: str) -> list[TravelQuery]:
    doc = _read_json(path)
    if isinstance(doc, dict):
        doc = doc.get("queries")
    if not isinstance(doc, list):
        raise DataError(f"{path}: expected a list of queries or a 'queries' key")
    queries = []
    for i, entry in enumerate(doc):
        try:
            query = TravelQuery.from_json(entry)
            validate_query(query)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: query #{i}: {exc}") from None
        queries.append(query)
    return queries


def _load_database(path: str):
    try:
        return load_database(path)
    except (MissingFile, SchemaViolation) as exc:
        raise DataError(str(exc)) from None


# ---------------------------------------------------------------------------
# Flag plumbing
# ---------------------------------------------------------------------------


def _latency_pair(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected LO:HI milliseconds, got {text!r}")
    try:
        pair = (int(lo), int(hi))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI integers, got {text!r}") from None
    if pair[0] < 0 or pair[1] < pair[0]:
        raise argparse.ArgumentTypeError(f"need 0 <= LO <= HI, got {text!r}")
    return pair


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _add_planning_flags(sub: argparse.ArgumentParser) -> None:
    """Flags shared by every command that runs planning sessions.

    Defaults stay None so a --config file can fill in whatever the command
    line leaves unset; _resolve_* applies the real defaults afterwards.
    """
    sub.add_argument("--seed", type=int, default=None, help="session seed (default: $HIMAP_SEED or 0)")
    sub.add_argument("--kmax", type=_positive_int, default=None, help="bargaining iteration cap (default 3)")
    sub.add_argument("--workers", type=_positive_int, default=None, help="parallel day executors (default 3)")
    sub.add_argument(
        "--tool-latency-ms",
        type=_latency_pair,
        default=None,
        metavar="LO:HI",
        help="injected latency per tool call",
    )
    sub.add_argument("--config", default=None, help="JSON file of flag defaults; explicit flags win")
    sub.add_argument("--no-monitor", action="store_true", default=None, help="disable the shared-state monitor")
    sub.add_argument("--no-coordinator", action="store_true", default=None, help="uniform hints and round-robin cities")
    sub.add_argument("--no-bargaining", action="store_true", default=None, help="single iteration, no retries")
    sub.add_argument("--no-parallel", action="store_true", default=None, help="run days sequentially")


_CONFIG_KEYS = {
    "seed": int,
    "kmax": int,
    "workers": int,
    "tool_latency_ms": "latency",
    "no_monitor": bool,
    "no_coordinator": bool,
    "no_bargaining": bool,
    "no_parallel": bool,
    "dump_state": bool,
}


def _apply_config_file(args: argparse.Namespace) -> None:
    if getattr(args, "config", None) is None:
        return
    doc = _read_json(args.config)
    if not isinstance(doc, dict):
        raise DataError(f"{args.config}: expected an object of flag defaults")
    for key, value in doc.items():
        if key not in _CONFIG_KEYS:
            raise DataError(f"{args.config}: unknown setting {key!r}")
        kind = _CONFIG_KEYS[key]
        if kind == "latency":
            if isinstance(value, str):
                try:
                    value = _latency_pair(value)
                except argparse.ArgumentTypeError as exc:
                    raise DataError(f"{args.config}: {key}: {exc}") from None
            elif isinstance(value, list) and len(value) == 2:
                value = (int(value[0]), int(value[1]))
            else:
                raise DataError(f"{args.config}: {key}: expected 'LO:HI' or [lo, hi]")
        elif not isinstance(value, kind) or isinstance(value, bool) != (kind is bool):
            raise DataError(f"{args.config}: {key}: expected {kind.__name__}")
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _resolve_seed(args: argparse.Namespace) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    raw = os.environ.get(SEED_ENV)
    if raw is not None:
        try:
            return int(raw)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    return 0


def _session_config(
    args: argparse.Namespace, seed: int, default_latency: tuple[int, int]
) -> SessionConfig:
    latency = args.tool_latency_ms if args.tool_latency_ms is not None else default_latency
    return SessionConfig(
        k_max=args.kmax if args.kmax is not None else 3,
        parallelism=args.workers if args.workers is not None else 3,
        tool_latency_ms=latency,
        seed=seed,
        no_monitor=bool(args.no_monitor),
        no_coordinator=bool(args.no_coordinator),
        no_bargaining=bool(args.no_bargaining),
        no_parallel=bool(args.no_parallel),
    )


def _config_echo(config: SessionConfig) -> dict[str, Any]:
    return {
        "kmax": config.k_max,
        "workers": config.parallelism,
        "tool_latency_ms": list(config.tool_latency_ms),
        "no_monitor": config.no_monitor,
        "no_coordinator": config.no_coordinator,
        "no_bargaining": config.no_bargaining,
        "no_parallel": config.no_parallel,
    }


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def _corpus_artifacts(
    out: Path, corpus: GeneratedCorpus, seed: int, meta: dict[str, Any]
) -> None:
    save_database(corpus.database, out / "db")
    _write_json(
        out / "queries.json",
        {"seed": seed, **meta, "queries": [q.to_json() for q in corpus.queries]},
    )
    _write_json(
        out / "reference_plans.json",
        {
            "seed": seed,
            "plans": {
                qid: [p.to_json() for p in plans]
                for qid, plans in corpus.reference_plans.items()
            },
        },
    )


def cmd_generate(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args)
    out = Path(args.out)
    if args.adversarial:
        corpus = generate_bargaining_adversarial(
            seed, args.count, margin=args.margin if args.margin is not None else 1.2
        )
        meta: dict[str, Any] = {"corpus": "adversarial"}
    else:
        corpus = generate_instances(seed, args.count, args.tier, args.margin)
        meta = {
            "corpus": "standard",
            "tier": args.tier,
            "margin": args.margin if args.margin is not None else TIER_MARGINS[args.tier],
        }
    _corpus_artifacts(out, corpus, seed, meta)
    if args.flex:
        eligible = [q for q in corpus.queries if flex_eligible(q, args.flex)]
        scenarios = generate_flex_scenarios(eligible, seed, args.flex)
        _write_json(
            out / "scenarios.json",
            {
                "seed": seed,
                "shape": args.flex,
                "scenarios": [sc.to_json() for sc in scenarios],
            },
        )
        skipped = len(corpus.queries) - len(eligible)
        if skipped:
            print(f"skipped {skipped} queries with nothing to defer for {args.flex}")
    print(f"wrote {len(corpus.queries)} queries under {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------


def cmd_plan(args: argparse.Namespace) -> int:
    _apply_config_file(args)
    seed = _resolve_seed(args)
    # Planning artifacts must be reproducible byte for byte, so the CLI
    # defaults to zero injected latency; pass --tool-latency-ms to model
    # slow tools (bench does this by default).
    config = _session_config(args, seed, default_latency=(0, 0))
    db = _load_database(args.db)
    queries = _load_queries(args.queries)
    out = Path(args.out)

    sessions: list[dict[str, Any]] = []
    plans: dict[str, list[dict[str, Any]]] = {}
    traces: list[dict[str, Any]] = []
    timings: dict[str, dict[str, float]] = {}
    monitors: dict[str, dict[str, Any]] = {}
    passes = 0
    for query in queries:
        result = plan(db, query, GreedyPolicy(), config)
        sessions.append(result.to_report_json(include_timings=False))
        plans[query.query_id] = [p.to_json() for p in result.plans]
        timings[query.query_id] = {k: round(v, 3) for k, v in result.timings_ms.items()}
        if result.feasible:
            traces.append({"query_id": query.query_id, "traces": result.traces})
        if args.dump_state and result.sigma is not None:
            monitors[query.query_id] = result.sigma.dump()
        passes += result.final_pass
        verdict = "pass" if result.final_pass else "FAIL"
        print(f"{query.query_id}: {verdict} (iterations={result.iterations_used})")

    _write_json(
        out / "sessions.json",
        {"seed": seed, "config": _config_echo(config), "sessions": sessions},
    )
    _write_json(out / "plans.json", {"seed": seed, "plans": plans})
    _write_jsonl(out / "traces.jsonl", traces)
    _write_json(out / "timings.json", {"seed": seed, "timings_ms": timings})
    if args.dump_state:
        _write_json(out / "state.json", {"seed": seed, "monitors": monitors})
    print(f"{passes}/{len(queries)} queries satisfied; artifacts under {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _plans_by_query(doc: Any, path: str) -> dict[str, Any]:
    if isinstance(doc, dict) and "plans" in doc and isinstance(doc["plans"], dict):
        return doc["plans"]
    if isinstance(doc, dict):
        return doc
    raise DataError(f"{path}: expected a mapping of query_id to day plans")


def cmd_eval(args: argparse.Namespace) -> int:
    db = _load_database(args.db)
    queries = _load_queries(args.queries)
    doc = _read_json(args.plans)
    by_query = _plans_by_query(doc, args.plans)
    seed = doc.get("seed", 0) if isinstance(doc, dict) else 0

    reports: list[EvalReport] = []
    for query in queries:
        entry = by_query.get(query.query_id)
        if not entry:
            reports.append(failed_report(query, "no plans delivered"))
            continue
        try:
            day_plans = [DayPlan.from_json(item) for item in entry]
        except Exception as exc:  # malformed rows score as undelivered
            reports.append(failed_report(query, f"unparseable plans: {exc}"))
            continue
        reports.append(evaluate(db, query, day_plans))

    metrics = aggregate(reports)
    _write_json(
        Path(args.out) / "report.json",
        {
            "seed": seed,
            "reports": [r.to_json() for r in reports],
            "metrics": metrics.to_json(),
        },
    )
    print(
        f"final pass {metrics.final_pass_rate:.1%} "
        f"(delivery {metrics.delivery_rate:.1%}, "
        f"hard micro {metrics.hard_micro:.1%}) over {metrics.plan_count} queries"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args: argparse.Namespace) -> int:
    _apply_config_file(args)
    seed = _resolve_seed(args)
    config = _session_config(args, seed, default_latency=(50, 200))
    db = _load_database(args.db)
    queries = _load_queries(args.queries)
    doc = benchmark(db, queries, GreedyPolicy(), config)
    _write_json(Path(args.out) / "bench.json", doc)
    print(
        f"mean day-planning speedup {doc['mean_day_planning_speedup']} "
        f"over {len(queries)} queries (P={config.parallelism})"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------


def cmd_ablate(args: argparse.Namespace) -> int:
    _apply_config_file(args)
    seed = _resolve_seed(args)
    base = _session_config(args, seed, default_latency=(0, 0))
    policy_cls = _POLICIES[args.policy]
    db = _load_database(args.db)
    queries = _load_queries(args.queries)

    arms: dict[str, Any] = {}
    for arm in _ABLATION_ARMS:
        config = base if arm == "full" else replace(base, **{arm: True})
        reports = []
        rows = []
        for query in queries:
            result = plan(db, query, policy_cls(), config)
            report = evaluate(db, query, result.plans)
            reports.append(report)
            rows.append(
                {
                    "query_id": query.query_id,
                    "final_pass": report.final_pass,
                    "iterations": result.iterations_used,
                    "duplicate_violation": not report.verdict("is_valid_restaurants").ok()
                    or not report.verdict("is_valid_attractions").ok(),
                }
            )
        arms[arm] = {
            "metrics": aggregate(reports).to_json(),
            "mean_iterations": round(
                sum(r["iterations"] for r in rows) / max(len(rows), 1), 4
            ),
            "duplicate_violations": sum(r["duplicate_violation"] for r in rows),
            "sessions": rows,
        }
        print(
            f"{arm}: final pass {arms[arm]['metrics']['final_pass_rate']:.1%}, "
            f"duplicates {arms[arm]['duplicate_violations']}, "
            f"mean iterations {arms[arm]['mean_iterations']}"
        )

    _write_json(
        Path(args.out) / "ablate.json",
        {"seed": seed, "policy": args.policy, "arms": arms},
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# flex
# ---------------------------------------------------------------------------


def cmd_flex(args: argparse.Namespace) -> int:
    _apply_config_file(args)
    seed = _resolve_seed(args)
    config = _session_config(args, seed, default_latency=(0, 0))
    db = _load_database(args.db)
    doc = _read_json(args.scenarios)
    entries = doc.get("scenarios") if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise DataError(f"{args.scenarios}: expected a list under 'scenarios'")
    try:
        scenarios = [MultiTurnScenario.from_json(entry) for entry in entries]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.scenarios}: {exc}") from None

    results = []
    satisfied = 0
    for scenario in scenarios:
        sessions = run_flex_scenario(
            db, scenario.query, scenario.updates, GreedyPolicy(), config
        )
        final_report = evaluate(db, scenario.final_query(), sessions[-1].plans)
        turns = [
            {
                "turn": i + 1,
                "feasible": s.feasible,
                "final_pass_input": s.final_pass,
                "iterations": s.iterations_used,
                "replanned": s.iterations_used > 0,
            }
            for i, s in enumerate(sessions)
        ]
        results.append(
            {
                "scenario_id": scenario.scenario_id,
                "shape": scenario.shape,
                "turns": turns,
                "final_pass": final_report.final_pass,
            }
        )
        satisfied += final_report.final_pass
    _write_json(
        Path(args.out) / "flex.json",
        {"seed": seed, "scenarios": results},
    )
    print(f"{satisfied}/{len(scenarios)} scenarios satisfied after the last turn")
    return EXIT_OK


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tripsmith", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("generate", help="build a seeded corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--count", type=_positive_int, default=20)
    p.add_argument("--tier", choices=sorted(TIER_MARGINS), default="easy")
    p.add_argument("--margin", type=float, default=None, help="budget over reference cost")
    p.add_argument("--adversarial", action="store_true", help="trap-city recovery corpus")
    p.add_argument("--flex", choices=FLEX_SHAPES, default=None, help="also emit multi-turn scenarios")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("plan", help="plan every query and write artifacts")
    p.add_argument("--db", required=True, help="database directory")
    p.add_argument("--queries", required=True, help="queries.json")
    p.add_argument("--out", required=True, help="output directory")
    _add_planning_flags(p)
    p.add_argument("--dump-state", action="store_true", default=None, help="also dump final monitor state")
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser("eval", help="score delivered plans against queries")
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--plans", required=True, help="plans.json from the plan command")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("bench", help="sequential vs parallel day-planning timings")
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    _add_planning_flags(p)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("ablate", help="run every degradation arm over the queries")
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--policy", choices=sorted(_POLICIES), default="greedy")
    _add_planning_flags(p)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("flex", help="replay multi-turn constraint scenarios")
    p.add_argument("--db", required=True)
    p.add_argument("--scenarios", required=True, help="scenarios.json from generate --flex")
    p.add_argument("--out", required=True)
    _add_planning_flags(p)
    p.set_defaults(handler=cmd_flex)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.error("a subcommand is required")
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"tripsmith: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, GenerationError, InfeasibleTier, NothingToRemove) as exc:
        print(f"tripsmith: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"tripsmith: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
