"""Planning sessions: the bargaining loop around coordinator and executors.

A session runs up to k_max iterations. Each iteration checkpoints the shared
monitor, asks the coordinator for a meta-plan, fans the days out to executors
in batches of at most `parallelism`, and either keeps the result (all days
feasible) or rolls the monitor back and lets the coordinator try a different
allocation using the failure feedback. After exhausting its iterations a
session returns the highest-reward partial attempt, flagged.

Determinism: executors in one batch share a single monitor snapshot, commits
are funneled through a per-batch day-ordered gate, and injected tool latency
draws from per-day seeded generators. Equal (database, query, config, seed)
therefore reproduce plans and reports exactly; only wall-clock timings vary.
"""

from __future__ import annotations

import threading
import time
import zlib
from dataclasses import dataclass, field, replace
from random import Random
from typing import Any, Sequence

from .coordinator import (
    Coordinator,
    MetaPlan,
    MultiCityInSingleCity,
    NoFeasibleCities,
    SubGoal,
    Unresolvable,
)
from .evaluator import EvalReport, evaluate, failed_report
from .executor import (
    BargainFeedback,
    Policy,
    STATUS_FEASIBLE,
    STATUS_INFEASIBLE,
    ToolLimits,
    build_feedback,
    run_day,
)
from .monitor import DEFAULT_TAU, GlobalState
from .rewards import (
    DEFAULT_WEIGHTS,
    RewardWeights,
    coordinator_objective,
    executor_objective,
    extraction_score,
    global_reward_for_report,
    local_reward,
)
from .sandbox.database import Database
from .sandbox.types import ConstraintUpdate, DayPlan, TravelQuery, apply_update

PHASE_COORDINATOR = "coordinator"
PHASE_DAY_PLANNING = "day_planning"
PHASE_BARGAINING = "bargaining"
PHASE_VALIDATION = "validation"
PHASES = (PHASE_COORDINATOR, PHASE_DAY_PLANNING, PHASE_BARGAINING, PHASE_VALIDATION)


@dataclass
class SessionConfig:
    """Knobs for one planning session.

    The ablation flags degrade specific subsystems: no_monitor turns the
    shared state into an accept-everything stub, no_coordinator replaces
    affordability ranking and weighted hints with round-robin cities and flat
    hints, no_bargaining stops after one iteration, and no_parallel runs the
    days strictly in order.
    """

    k_max: int = 3
    parallelism: int = 3
    tool_latency_ms: tuple[int, int] = (50, 200)
    seed: int = 0
    tau: float = DEFAULT_TAU
    limits: ToolLimits = field(default_factory=ToolLimits)
    weights: RewardWeights = DEFAULT_WEIGHTS
    no_monitor: bool = False
    no_coordinator: bool = False
    no_bargaining: bool = False
    no_parallel: bool = False

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        lo, hi = self.tool_latency_ms
        if lo < 0 or hi < lo:
            raise ValueError("tool_latency_ms must be a 0 <= lo <= hi range")


@dataclass
class DayOutcome:
    """One executor's result, in day order regardless of completion order."""

    plan: DayPlan | None
    feedback: BargainFeedback
    trace: list[dict[str, Any]]


@dataclass
class IterationRecord:
    """What one bargaining iteration proposed, observed and earned."""

    iteration: int
    meta_plan: MetaPlan
    feedbacks: list[BargainFeedback]
    rewards: dict[str, Any]
    feasible: bool


@dataclass
class SessionResult:
    """Outcome of plan()/revise(), including per-iteration diagnostics.

    flagged marks a best-of-k fallback: no iteration delivered every day, so
    plans holds the highest-reward partial attempt. coordinator and sigma are
    live handles kept for follow-up revisions; they are not serialized.
    """

    query: TravelQuery
    plans: list[DayPlan]
    feasible: bool
    flagged: bool
    iterations_used: int
    per_iteration: list[IterationRecord]
    timings_ms: dict[str, float]
    report: EvalReport | None
    traces: list[list[dict[str, Any]]] = field(default_factory=list)
    coordinator: Coordinator | None = None
    sigma: GlobalState | None = None

    @property
    def final_pass(self) -> bool:
        return self.report is not None and self.report.final_pass

    def total_tool_calls(self) -> int:
        return sum(
            fb.n_tools_used for rec in self.per_iteration for fb in rec.feedbacks
        )

    def to_report_json(self, include_timings: bool = True) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "query_id": self.query.query_id,
            "final_pass_input": self.final_pass,
            "iterations": self.iterations_used,
        }
        if include_timings:
            doc["timings_ms"] = {k: round(v, 3) for k, v in self.timings_ms.items()}
        doc["plans"] = [p.to_json() for p in self.plans]
        doc["feasible"] = self.feasible
        doc["flagged"] = self.flagged
        return doc


def _latency_rng(seed: int, query_id: str, iteration: int, day: int) -> Random:
    token = f"{seed}:{query_id}:{iteration}:{day}".encode()
    return Random(zlib.crc32(token))


def _cancelled_outcome(day: int) -> DayOutcome:
    return DayOutcome(
        plan=None,
        feedback=build_feedback(
            day=day,
            status=STATUS_INFEASIBLE,
            violation_type="availability",
            n_tools_used=0,
            early=False,
            cancelled=True,
        ),
        trace=[],
    )


def schedule_parallel(
    db: Database,
    meta: MetaPlan,
    sigma: GlobalState,
    policy: Policy,
    config: SessionConfig,
    *,
    query: TravelQuery,
    iteration: int,
) -> list[DayOutcome]:
    """Run every day of the meta-plan in ceil(D/P) batches of <= P executors.

    The first genuine infeasibility cancels in-flight batch peers and stops
    later batches from launching; those days report cancelled feedback.
    Results come back in day order whatever the completion order was.
    """
    goals = list(meta.sub_goals)
    p = 1 if config.no_parallel else config.parallelism
    failed = threading.Event()
    outcomes: dict[int, DayOutcome] = {}

    def finish(goal: SubGoal, result: tuple) -> None:
        plan, fb, trace = result
        outcomes[goal.day] = DayOutcome(plan, fb, trace)
        if fb.status == STATUS_INFEASIBLE and not fb.cancelled:
            failed.set()

    for start in range(0, len(goals), p):
        batch = goals[start : start + p]
        if failed.is_set():
            for goal in batch:
                outcomes[goal.day] = _cancelled_outcome(goal.day)
            continue
        view = sigma.view()
        common = dict(
            query=query,
            trip=goals,
            transport_mode=meta.transport_mode,
            latency_ms=config.tool_latency_ms,
            sigma_view=view,
        )
        if len(batch) == 1:
            goal = batch[0]
            result = run_day(
                db,
                goal,
                sigma,
                policy,
                config.limits,
                failed,
                latency_rng=_latency_rng(config.seed, query.query_id, iteration, goal.day),
                **common,
            )
            finish(goal, result)
            continue

        # Gates chain the batch's commit phases in day order: gate i opens
        # when worker i-1 has returned, so searches overlap but commits are
        # serialized deterministically.
        gates = [threading.Event() for _ in batch]
        gates[0].set()

        def worker(index: int, goal: SubGoal) -> None:
            try:
                result = run_day(
                    db,
                    goal,
                    sigma,
                    policy,
                    config.limits,
                    failed,
                    latency_rng=_latency_rng(
                        config.seed, query.query_id, iteration, goal.day
                    ),
                    commit_gate=gates[index],
                    **common,
                )
                finish(goal, result)
            finally:
                if index + 1 < len(gates):
                    gates[index + 1].set()

        threads = [
            threading.Thread(
                target=worker, args=(i, goal), name=f"day-{goal.day}", daemon=True
            )
            for i, goal in enumerate(batch)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    return [outcomes[goal.day] for goal in goals]


def _iteration_rewards(
    db: Database,
    query: TravelQuery,
    meta: MetaPlan,
    outcomes: Sequence[DayOutcome],
    sigma: GlobalState,
    iteration: int,
    weights: RewardWeights,
) -> tuple[dict[str, Any], EvalReport, float]:
    """Score one iteration: global reward, coordinator and executor views."""
    delivered = [o.plan for o in outcomes if o.plan is not None]
    report = evaluate(db, query, delivered)
    r_global = global_reward_for_report(
        report, b_used=sigma.b_used, b_total=sigma.b_total, weights=weights
    )
    trip_length = len(meta.sub_goals)
    executors = {
        goal.day: executor_objective(
            r_global,
            local_reward(outcome.plan, goal, trip_length),
            outcome.feedback.early,
            weights,
        )
        for goal, outcome in zip(meta.sub_goals, outcomes)
    }
    rewards = {
        "global": r_global,
        "coordinator": coordinator_objective(
            r_global, extraction_score(query, meta), iteration, weights
        ),
        "executors": executors,
    }
    return rewards, report, r_global


def _failure_days(feedbacks: Sequence[BargainFeedback]) -> list[int]:
    """Days to blame for a failed iteration.

    Only the earliest non-cancelled infeasibility is reported: later failures
    may be knock-on effects of the shared budget after the first one, and
    cancelled days never even finished deciding.
    """
    genuine = sorted(
        fb.day
        for fb in feedbacks
        if fb.status == STATUS_INFEASIBLE and not fb.cancelled
    )
    return genuine[:1]


def plan(
    db: Database,
    query: TravelQuery,
    policy: Policy,
    config: SessionConfig | None = None,
    *,
    coordinator: Coordinator | None = None,
    sigma: GlobalState | None = None,
) -> SessionResult:
    """Run one full bargaining session for the query.

    A fresh monitor and coordinator are built unless provided (revise() and
    tests pass their own). The monitor is checkpointed before each iteration
    and rolled back after each failed one, so a session that never succeeds
    leaves it byte-identical to its pre-session state.
    """
    config = config or SessionConfig()
    if sigma is None:
        sigma = GlobalState(query.budget, tau=config.tau, enabled=not config.no_monitor)
    coord = coordinator or Coordinator(
        seed=config.seed,
        uniform_hints=config.no_coordinator,
        round_robin_cities=config.no_coordinator,
    )
    k_max = 1 if config.no_bargaining else config.k_max
    timings = {phase: 0.0 for phase in PHASES}
    records: list[IterationRecord] = []
    best: tuple[float, list[DayPlan], EvalReport, list[list[dict[str, Any]]]] | None = None

    def charge(phase: str, since: float) -> None:
        timings[phase] += (time.perf_counter() - since) * 1000.0

    for k in range(1, k_max + 1):
        allocate_phase = PHASE_COORDINATOR if k == 1 else PHASE_BARGAINING
        t0 = time.perf_counter()
        sigma.checkpoint()
        try:
            meta = coord.distribute_task(db, query, sigma, iteration=k)
        except (NoFeasibleCities, Unresolvable, MultiCityInSingleCity):
            sigma.rollback()
            charge(allocate_phase, t0)
            break
        charge(allocate_phase, t0)

        t0 = time.perf_counter()
        outcomes = schedule_parallel(
            db, meta, sigma, policy, config, query=query, iteration=k
        )
        charge(PHASE_DAY_PLANNING, t0)

        feedbacks = [o.feedback for o in outcomes]
        feasible = all(fb.status == STATUS_FEASIBLE for fb in feedbacks)

        t0 = time.perf_counter()
        rewards, report, r_global = _iteration_rewards(
            db, query, meta, outcomes, sigma, k, config.weights
        )
        records.append(IterationRecord(k, meta, feedbacks, rewards, feasible))
        charge(PHASE_VALIDATION if feasible else PHASE_BARGAINING, t0)

        if feasible:
            sigma.release_checkpoint()
            return SessionResult(
                query=query,
                plans=[o.plan for o in outcomes],
                feasible=True,
                flagged=False,
                iterations_used=k,
                per_iteration=records,
                timings_ms=timings,
                report=report,
                traces=[o.trace for o in outcomes],
                coordinator=coord,
                sigma=sigma,
            )

        t0 = time.perf_counter()
        delivered = [o.plan for o in outcomes if o.plan is not None]
        if best is None or r_global > best[0]:
            best = (r_global, delivered, report, [o.trace for o in outcomes])
        coord.note_failure(_failure_days(feedbacks))
        sigma.rollback()
        charge(PHASE_BARGAINING, t0)

    if best is None:  # the coordinator never produced a proposal
        best = (0.0, [], failed_report(query, "no feasible city allocation"), [])
    _, plans, report, traces = best
    return SessionResult(
        query=query,
        plans=plans,
        feasible=False,
        flagged=True,
        iterations_used=len(records),
        per_iteration=records,
        timings_ms=timings,
        report=report,
        traces=traces,
        coordinator=coord,
        sigma=sigma,
    )


def revise(
    session: SessionResult,
    update: ConstraintUpdate,
    db: Database,
    policy: Policy,
    config: SessionConfig | None = None,
) -> SessionResult:
    """Apply a follow-up constraint and replan only if the plan stopped
    satisfying the query.

    The committed state is checkpointed first; when the existing plan still
    passes the updated query's evaluation the checkpoint is released and the
    plan comes back unchanged (iterations_used=0). Otherwise the old monitor
    is rolled back and a fresh session runs against the updated query, with
    the prior session's coordinator memory seeding the city exclusions.
    """
    config = config or SessionConfig()
    new_query = apply_update(session.query, update)
    old_sigma = session.sigma

    t0 = time.perf_counter()
    if old_sigma is not None:
        old_sigma.checkpoint()
    if session.feasible and session.plans:
        report = evaluate(db, new_query, session.plans)
        if report.final_pass:
            if old_sigma is not None:
                old_sigma.release_checkpoint()
            timings = {phase: 0.0 for phase in PHASES}
            timings[PHASE_VALIDATION] = (time.perf_counter() - t0) * 1000.0
            return SessionResult(
                query=new_query,
                plans=session.plans,
                feasible=True,
                flagged=False,
                iterations_used=0,
                per_iteration=[],
                timings_ms=timings,
                report=report,
                traces=session.traces,
                coordinator=session.coordinator,
                sigma=old_sigma,
            )
    if old_sigma is not None:
        old_sigma.rollback()

    fresh = GlobalState(
        new_query.budget, tau=config.tau, enabled=not config.no_monitor
    )
    return plan(
        db,
        new_query,
        policy,
        config,
        coordinator=session.coordinator,
        sigma=fresh,
    )


def run_flex_scenario(
    db: Database,
    query: TravelQuery,
    updates: Sequence[ConstraintUpdate],
    policy: Policy,
    config: SessionConfig | None = None,
) -> list[SessionResult]:
    """Drive a multi-turn scenario: plan the base query, then revise per turn."""
    results = [plan(db, query, policy, config)]
    for update in updates:
        results.append(revise(results[-1], update, db, policy, config))
    return results


def benchmark(
    db: Database,
    queries: Sequence[TravelQuery],
    policy: Policy,
    config: SessionConfig | None = None,
) -> dict[str, Any]:
    """Time each query sequentially (P=1) and in parallel (P=config).

    Both runs use the same injected tool latency and seed, so their tool-call
    counts match and the day-planning speedup isolates the batch shape.
    """
    config = config or SessionConfig()
    rows: list[dict[str, Any]] = []
    for query in queries:
        seq = plan(db, query, policy, replace(config, no_parallel=True))
        par = plan(db, query, policy, replace(config, no_parallel=False))
        seq_day = seq.timings_ms[PHASE_DAY_PLANNING]
        par_day = par.timings_ms[PHASE_DAY_PLANNING]
        rows.append(
            {
                "query_id": query.query_id,
                "days": query.days,
                "sequential_ms": {k: round(v, 3) for k, v in seq.timings_ms.items()},
                "parallel_ms": {k: round(v, 3) for k, v in par.timings_ms.items()},
                "tool_calls": {
                    "sequential": seq.total_tool_calls(),
                    "parallel": par.total_tool_calls(),
                },
                "day_planning_speedup": (
                    round(seq_day / par_day, 4) if par_day > 0 else None
                ),
            }
        )
    speedups = [
        row["day_planning_speedup"]
        for row in rows
        if row["day_planning_speedup"] is not None
    ]
    return {
        "parallelism": config.parallelism,
        "tool_latency_ms": list(config.tool_latency_ms),
        "seed": config.seed,
        "rows": rows,
        "mean_day_planning_speedup": (
            round(sum(speedups) / len(speedups), 4) if speedups else None
        ),
    }
