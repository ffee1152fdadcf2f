"""Per-day plan execution.

run_day drives one day's policy through the sandbox tools under a tool-call
cap, commits the chosen items against the shared monitor, and reports a
structured bargaining feedback record either way. Policies are plain
callables; the scripted GreedyPolicy picks the cheapest option satisfying
every constraint, which is the reference behavior all tests build on.

Context isolation: a policy sees its own day's sub-goal, the static query
and route, the shared monitor view, and its own observations. It never sees
another day's trace.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from random import Random
from typing import Any, Callable, Protocol, Sequence

from .coordinator import MODE_FLIGHT, MODE_SELF_DRIVING, MODE_TAXI, SubGoal
from .monitor import (
    BUDGET_EXCEEDED,
    DUPLICATE_VENUE,
    KIND_ACCOMMODATION,
    KIND_ATTRACTION,
    KIND_MEAL,
    KIND_TRANSPORT,
    OK,
    CommitAction,
    GlobalState,
    MonitorView,
    canonicalize,
    get_remaining_nights,
)
from .money import format_dollars
from .sandbox.database import (
    Database,
    accommodation_search,
    attraction_search,
    distance_search,
    flight_search,
    restaurant_search,
)
from .sandbox.types import (
    Accommodation,
    Attraction,
    City,
    DayPlan,
    EMPTY_FIELD,
    Flight,
    MEAL_SLOTS,
    ROLE_RETURN,
    ROLE_STAY,
    Restaurant,
    TravelQuery,
    format_route,
    format_venue,
    join_attractions,
)

logger = logging.getLogger(__name__)

# Violation categories carried in bargaining feedback.
VIOLATION_BUDGET = "budget"
VIOLATION_TIME = "time"
VIOLATION_AVAILABILITY = "availability"

STATUS_FEASIBLE = "feasible"
STATUS_INFEASIBLE = "infeasible"


@dataclass
class ToolLimits:
    """Caps for one day's execution.

    error_violation controls how an error-count trip is categorized in
    feedback: "time" treats repeated faults as burnt planning time (the
    default); "availability" mirrors traces that fold them into empty-result
    handling.
    """

    max_tool_calls: int = 15
    early_window: int = 5
    max_errors: int = 3
    error_violation: str = VIOLATION_TIME


@dataclass
class BargainFeedback:
    """Structured per-day outcome used by bargaining iterations.

    cancelled marks a day that was stopped by the orchestrator rather than
    failing on its own; it is bookkeeping for the scheduler and deliberately
    stays out of the serialized feedback record.
    """

    status: str
    deficit: int  # cents still missing when the violation is budgetary
    violation_type: str | None
    day: int
    n_tools_used: int
    early: bool
    cancelled: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "deficit": self.deficit,
            "violation_type": self.violation_type,
            "day": self.day,
            "n_tools_used": self.n_tools_used,
            "early": self.early,
        }


def build_feedback(
    day: int,
    status: str,
    violation_type: str | None = None,
    deficit: int = 0,
    n_tools_used: int = 0,
    early: bool = False,
    cancelled: bool = False,
) -> BargainFeedback:
    """Assemble a feedback record, enforcing the schema's invariants."""
    if status not in (STATUS_FEASIBLE, STATUS_INFEASIBLE):
        raise ValueError(f"bad status: {status!r}")
    if status == STATUS_FEASIBLE:
        violation_type, deficit, early, cancelled = None, 0, False, False
    if violation_type not in (
        None,
        VIOLATION_BUDGET,
        VIOLATION_TIME,
        VIOLATION_AVAILABILITY,
    ):
        raise ValueError(f"bad violation_type: {violation_type!r}")
    if deficit < 0:
        raise ValueError("deficit must be non-negative cents")
    return BargainFeedback(
        status=status,
        deficit=deficit,
        violation_type=violation_type,
        day=day,
        n_tools_used=n_tools_used,
        early=early,
        cancelled=cancelled,
    )


# ---------------------------------------------------------------------------
# Policy interface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DayContext:
    """Static inputs a policy may use: no other day's observations.

    sigma is a read-only snapshot; committing is run_day's job, so a policy
    cannot mutate shared state even by accident.
    """

    goal: SubGoal
    trip: tuple[SubGoal, ...]
    query: TravelQuery
    transport_mode: str
    sigma: MonitorView

    @property
    def role(self) -> str:
        return self.goal.role

    def overnight(self) -> bool:
        return self.goal.day < len(self.trip)


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict[str, Any]


@dataclass(frozen=True)
class Finish:
    """Final selections for the day. Venue objects, not strings."""

    transport: Flight | str | None  # Flight, "Taxi", "Self-driving", or None
    accommodation: Accommodation | None
    meals: dict[str, Restaurant] = field(default_factory=dict)  # slot -> venue
    attractions: tuple[Attraction, ...] = ()


@dataclass(frozen=True)
class Abort:
    """The policy concluded the day cannot be planned."""

    violation_type: str
    deficit: int = 0
    detail: str = ""


PolicyDecision = ToolCall | Finish | Abort


@dataclass(frozen=True)
class Observation:
    tool: str
    args: dict[str, Any]
    result: Any
    summary: str


class Policy(Protocol):
    def __call__(
        self, ctx: DayContext, observations: Sequence[Observation]
    ) -> PolicyDecision: ...


class PolicyFault(Exception):
    """A malformed decision; counted against the day's error budget."""


# ---------------------------------------------------------------------------
# run_day
# ---------------------------------------------------------------------------

_TOOLS: dict[str, Callable[..., Any]] = {
    "flight_search": flight_search,
    "accommodation_search": accommodation_search,
    "restaurant_search": restaurant_search,
    "attraction_search": attraction_search,
    "distance_search": distance_search,
}


def _summarize(tool: str, result: Any) -> str:
    if result is None:
        return "no results"
    if isinstance(result, list):
        if not result:
            return "0 results"
        first = result[0]
        if isinstance(first, Flight):
            return f"{len(result)} flights; cheapest {first.flight_number} {format_dollars(first.price)}"
        if isinstance(first, Accommodation):
            return f"{len(result)} accommodations; cheapest {first.name} {format_dollars(first.price)}"
        if isinstance(first, Restaurant):
            return f"{len(result)} restaurants; cheapest {first.name} {format_dollars(first.avg_cost)}"
        if isinstance(first, Attraction):
            return f"{len(result)} attractions; first {first.name}"
        return f"{len(result)} results"
    return str(result)


def _mode_to_transport_string(transport: Flight | str | None) -> str:
    if transport is None:
        return EMPTY_FIELD
    if isinstance(transport, Flight):
        return transport.flight_number
    return transport  # "Taxi" or "Self-driving"


def run_day(
    db: Database,
    goal: SubGoal,
    sigma: GlobalState,
    policy: Policy,
    limits: ToolLimits | None = None,
    cancel: threading.Event | None = None,
    *,
    query: TravelQuery,
    trip: Sequence[SubGoal],
    transport_mode: str,
    latency_ms: tuple[int, int] = (0, 0),
    latency_rng: Random | None = None,
    sigma_view: MonitorView | None = None,
    commit_gate: threading.Event | None = None,
) -> tuple[DayPlan | None, BargainFeedback, list[dict[str, Any]]]:
    """Execute one day under the tool-call cap.

    Returns (day plan or None, feedback, trace). The trace is a list of
    JSON-compatible turn records. Commits that succeed before a failure are
    intentionally left in sigma; the orchestrator's checkpoint/rollback is
    the undo mechanism.

    sigma_view pins the snapshot the policy sees (the scheduler gives one
    batch one view); by default a fresh snapshot is taken here. commit_gate,
    when given, delays the first commit until the gate opens, which is how
    the scheduler keeps concurrent commits in day order.
    """
    limits = limits or ToolLimits()
    ctx = DayContext(
        goal=goal,
        trip=tuple(trip),
        query=query,
        transport_mode=transport_mode,
        sigma=sigma_view if sigma_view is not None else sigma.view(),
    )
    observations: list[Observation] = []
    trace: list[dict[str, Any]] = []
    tools_used = 0
    errors = 0
    committed: dict[str, int] = {}  # item id -> cents actually committed

    def record(name: str, args: dict[str, Any], summary: str) -> None:
        trace.append(
            {
                "turn": len(trace) + 1,
                "role": "day_planner",
                "day": goal.day,
                "call": {"name": name, "arguments": args},
                "observation": summary,
            }
        )

    def infeasible(
        violation: str, deficit: int = 0, detail: str = ""
    ) -> tuple[None, BargainFeedback, list[dict[str, Any]]]:
        cancelled = violation == "cancelled"
        early = not cancelled and tools_used < limits.early_window
        actual = VIOLATION_AVAILABILITY if cancelled else violation
        if detail:
            record("infeasible", {"violation_type": actual}, detail)
        fb = build_feedback(
            day=goal.day,
            status=STATUS_INFEASIBLE,
            violation_type=actual,
            deficit=deficit,
            n_tools_used=tools_used,
            early=early,
            cancelled=cancelled,
        )
        return None, fb, trace

    def sleep_latency() -> None:
        lo, hi = latency_ms
        if hi <= 0:
            return
        rng = latency_rng or Random(0)
        delay = lo if lo == hi else rng.uniform(lo, hi)
        time.sleep(delay / 1000.0)

    while True:
        if cancel is not None and cancel.is_set():
            return infeasible("cancelled", detail="cancelled by orchestrator")
        if tools_used >= limits.max_tool_calls:
            return infeasible(
                VIOLATION_TIME, detail="tool-call cap reached without a plan"
            )
        try:
            decision = policy(ctx, observations)
        except PolicyFault as fault:
            errors += 1
            tools_used += 1
            record("policy_fault", {}, str(fault))
            if errors > limits.max_errors:
                return infeasible(
                    limits.error_violation,
                    detail=f"too many execution errors ({errors})",
                )
            continue

        if isinstance(decision, Abort):
            return infeasible(
                decision.violation_type, decision.deficit, decision.detail or "aborted"
            )

        if isinstance(decision, ToolCall):
            fn = _TOOLS.get(decision.tool)
            if fn is None:
                errors += 1
                tools_used += 1
                record(decision.tool, decision.args, "error: unknown tool")
                if errors > limits.max_errors:
                    return infeasible(
                        limits.error_violation,
                        detail=f"too many execution errors ({errors})",
                    )
                continue
            sleep_latency()
            try:
                result = fn(db, **decision.args)
            except TypeError as exc:
                errors += 1
                tools_used += 1
                record(decision.tool, decision.args, f"error: {exc}")
                if errors > limits.max_errors:
                    return infeasible(
                        limits.error_violation,
                        detail=f"too many execution errors ({errors})",
                    )
                continue
            tools_used += 1
            summary = _summarize(decision.tool, result)
            observations.append(
                Observation(
                    tool=decision.tool,
                    args=decision.args,
                    result=result,
                    summary=summary,
                )
            )
            args_json = {
                k: (v.display() if isinstance(v, City) else str(v))
                for k, v in decision.args.items()
            }
            record(decision.tool, args_json, summary)
            continue

        # Finish: translate selections into commits. Items carry a stable
        # item id so a retry after one rejection never re-commits the rest.
        assert isinstance(decision, Finish)
        if commit_gate is not None and not commit_gate.is_set():
            commit_gate.wait(60.0)  # opens when lower-numbered days are done
            if cancel is not None and cancel.is_set():
                return infeasible("cancelled", detail="cancelled at commit gate")
        plan_items: list[tuple[str, str, str, str, int, dict[str, Any]]] = []
        travel = goal.is_travel_day()

        if decision.transport is not None:
            if isinstance(decision.transport, Flight):
                cost = decision.transport.price
                key = canonicalize(decision.transport.flight_number)
                raw = decision.transport.flight_number
                mode = MODE_FLIGHT
            else:
                quote = distance_search(db, goal.from_city, goal.to_city)
                if quote is None:
                    return infeasible(
                        VIOLATION_AVAILABILITY, detail="no distance record for leg"
                    )
                if decision.transport == "Taxi":
                    cost, mode = quote.taxi_cost, MODE_TAXI
                else:
                    cost, mode = quote.selfdrive_cost, MODE_SELF_DRIVING
                key = canonicalize(f"{decision.transport} day {goal.day}")
                raw = decision.transport
            plan_items.append(
                ("transport", KIND_TRANSPORT, key, raw, cost, {"transport_mode": mode})
            )
        elif travel:
            return infeasible(
                VIOLATION_AVAILABILITY, detail="travel day finished without transport"
            )

        if decision.accommodation is not None:
            acc = decision.accommodation
            plan_items.append(
                (
                    "accommodation",
                    KIND_ACCOMMODATION,
                    canonicalize(acc.name),
                    acc.name,
                    acc.price,
                    {"city": goal.to_city.display()},
                )
            )
        elif ctx.overnight():
            return infeasible(
                VIOLATION_AVAILABILITY,
                detail="overnight day finished without accommodation",
            )

        for slot in MEAL_SLOTS:
            rest = decision.meals.get(slot)
            if rest is None:
                continue
            plan_items.append(
                (
                    f"meal:{slot}",
                    KIND_MEAL,
                    canonicalize(rest.name),
                    rest.name,
                    rest.avg_cost * goal.people,
                    {"slot": slot},
                )
            )
        for i, attraction in enumerate(decision.attractions):
            plan_items.append(
                (
                    f"attraction:{i}",
                    KIND_ATTRACTION,
                    canonicalize(attraction.name),
                    attraction.name,
                    0,
                    {},
                )
            )

        rejected = False
        for item_id, kind, key, raw, cost, extra in plan_items:
            if item_id in committed:
                continue
            action = CommitAction(
                day=goal.day,
                kind=kind,
                venue_key=key,
                raw_name=raw,
                cost=cost,
                city=extra.get("city", ""),
                transport_mode=extra.get("transport_mode"),
            )
            verdict = sigma.commit(action)
            if verdict == OK:
                committed[item_id] = cost
                continue
            # A violation observation costs one tool call from the cap.
            tools_used += 1
            rejected = True
            observations.append(
                Observation(
                    tool="commit_rejected",
                    args={
                        "item": item_id,
                        "kind": kind,
                        "key": key,
                        "code": verdict,
                        "cost": cost,
                        # Live headroom at rejection time, so the policy can
                        # quote a deficit without re-reading shared state.
                        "remaining": sigma.remaining_budget(),
                    },
                    result=verdict,
                    summary=f"{verdict}: {raw}",
                )
            )
            record(
                "commit",
                {"kind": kind, "name": raw, "cost": cost / 100},
                f"rejected: {verdict}",
            )
            break  # let the policy react before committing the rest

        if rejected:
            continue

        # All items are in; assemble the day plan.
        meals_by_slot = {
            slot: (
                format_venue(decision.meals[slot].name, decision.meals[slot].city)
                if slot in decision.meals
                else EMPTY_FIELD
            )
            for slot in MEAL_SLOTS
        }
        current_city = (
            format_route(goal.from_city, goal.to_city)
            if travel
            else goal.to_city.display()
        )
        plan = DayPlan(
            day=goal.day,
            current_city=current_city,
            transportation=_mode_to_transport_string(decision.transport),
            breakfast=meals_by_slot["breakfast"],
            lunch=meals_by_slot["lunch"],
            dinner=meals_by_slot["dinner"],
            attractions=join_attractions(
                [format_venue(t.name, t.city) for t in decision.attractions]
            ),
            accommodation=(
                format_venue(decision.accommodation.name, decision.accommodation.city)
                if decision.accommodation is not None
                else EMPTY_FIELD
            ),
            cost=sum(committed.values()),
        )
        record(
            "finish",
            {"day": goal.day},
            f"day cost {format_dollars(plan.cost)}",
        )
        fb = build_feedback(
            day=goal.day,
            status=STATUS_FEASIBLE,
            n_tools_used=tools_used,
        )
        return plan, fb, trace
