"""Plan validation: eight commonsense and five hard constraints.

Verdicts are per-constraint and carry a reason on failure. Constraints whose
precondition is absent from the query (no cuisine request, no room-type
request, ...) come back not-applicable, which counts as a pass everywhere.
Two gate constraints have precedence: a plan with absent days or hallucinated
venues can never pass the hard category, no matter how vacuously the hard
checks succeed.

Cost checking reuses the sandbox's cost_of_day so plan pricing is bit-exact
against what the executors committed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Any, Sequence

from .money import dollars
from .sandbox.database import (
    Database,
    UnknownVenue,
    city_search,
    cost_of_day,
    distance_search,
    resolve_accommodation,
    resolve_attraction,
    resolve_restaurant,
)
from .sandbox.types import (
    Accommodation,
    City,
    DayPlan,
    EMPTY_FIELD,
    TravelQuery,
    parse_current_city,
    parse_venue,
)

logger = logging.getLogger(__name__)

COMMONSENSE_CONSTRAINTS = (
    "is_not_absent",
    "is_valid_information_in_sandbox",
    "is_valid_information_in_current_city",
    "is_reasonable_visiting_city",
    "is_valid_restaurants",
    "is_valid_attractions",
    "is_valid_transportation",
    "is_valid_accommodation",
)

HARD_CONSTRAINTS = (
    "valid_cost",
    "valid_room_rule",
    "valid_cuisine",
    "valid_room_type",
    "valid_transportation",
)

ALL_CONSTRAINTS = COMMONSENSE_CONSTRAINTS + HARD_CONSTRAINTS

# Failing either of these voids the hard category outright.
GATE_CONSTRAINTS = ("is_not_absent", "is_valid_information_in_sandbox")

_GROUND_MODES = ("Taxi", "Self-driving")


# ---------------------------------------------------------------------------
# Constraint semantics shared with the planning policies
# ---------------------------------------------------------------------------


def house_rule_allows(acc: Accommodation, requirement: str | None) -> bool:
    """The party needs `requirement` (say "smoking"): any listing whose rules
    include the matching ban ("No smoking") is unacceptable."""
    if not requirement:
        return True
    banned = {rule.strip().lower() for rule in acc.house_rules}
    return f"no {requirement.strip().lower()}" not in banned


def room_type_matches(acc: Accommodation, wanted: str | None) -> bool:
    if not wanted:
        return True
    if wanted == "not shared room":
        return acc.room_type in ("entire room", "private room")
    return acc.room_type == wanted


# ---------------------------------------------------------------------------
# Verdicts and reports
# ---------------------------------------------------------------------------


@dataclass
class Verdict:
    name: str
    passed: bool | None  # None = not applicable (counts as a pass)
    reason: str | None = None

    def ok(self) -> bool:
        return self.passed is not False

    def to_json(self) -> dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "reason": self.reason}


@dataclass
class EvalReport:
    query_id: str
    delivered: bool
    verdicts: list[Verdict]
    commonsense_pass: bool
    hard_pass: bool
    final_pass: bool
    plan_cost: int | None  # cents; None when a venue cannot be priced
    drift: list[dict[str, Any]] = field(default_factory=list)
    complexity: float = 0.0

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def satisfied_count(self) -> int:
        return sum(1 for v in self.verdicts if v.ok())

    def to_json(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "delivered": self.delivered,
            "verdicts": [v.to_json() for v in self.verdicts],
            "commonsense_pass": self.commonsense_pass,
            "hard_pass": self.hard_pass,
            "final_pass": self.final_pass,
            "plan_cost": None if self.plan_cost is None else dollars(self.plan_cost),
            "drift": self.drift,
            "complexity": self.complexity,
        }


def failed_report(query: TravelQuery, reason: str) -> EvalReport:
    """Report for undelivered or unparseable plans: everything fails."""
    verdicts = [Verdict(name, False, reason) for name in ALL_CONSTRAINTS]
    return EvalReport(
        query_id=query.query_id,
        delivered=False,
        verdicts=verdicts,
        commonsense_pass=False,
        hard_pass=False,
        final_pass=False,
        plan_cost=None,
        drift=[],
        complexity=complexity_score(query),
    )


# ---------------------------------------------------------------------------
# Per-day geometry helpers
# ---------------------------------------------------------------------------


def _day_cities(plan: DayPlan) -> tuple[City | None, City] | None:
    try:
        return parse_current_city(plan.current_city)
    except ValueError:
        return None


def _named_venues(plan: DayPlan) -> list[tuple[str, str]]:
    """(field, venue string) pairs for every non-empty venue of the day."""
    out = []
    for slot, value in (
        ("breakfast", plan.breakfast),
        ("lunch", plan.lunch),
        ("dinner", plan.dinner),
        ("accommodation", plan.accommodation),
    ):
        if value.strip() not in ("", EMPTY_FIELD):
            out.append((slot, value))
    for entry in plan.attraction_list():
        out.append(("attraction", entry))
    return out


def _accommodation_runs(plans: Sequence[DayPlan]) -> list[tuple[str, int]]:
    """Run-length encode consecutive identical accommodation bookings."""
    runs: list[tuple[str, int]] = []
    for plan in plans:
        value = plan.accommodation.strip()
        if value in ("", EMPTY_FIELD):
            continue
        if runs and runs[-1][0] == value and plan.day == runs[-1][2] + 1:
            name, count, _ = runs[-1]
            runs[-1] = (name, count + 1, plan.day)
        else:
            runs.append((value, 1, plan.day))
    return [(name, count) for name, count, _ in runs]


# ---------------------------------------------------------------------------
# The thirteen constraints
# ---------------------------------------------------------------------------


def _check_is_not_absent(db, query, plans) -> Verdict:
    name = "is_not_absent"
    if not plans:
        return Verdict(name, False, "no plans delivered")
    days = [p.day for p in plans]
    if days != list(range(1, query.days + 1)):
        return Verdict(name, False, f"expected days 1..{query.days}, got {days}")
    for p in plans:
        for field_name in (
            "current_city",
            "transportation",
            "breakfast",
            "lunch",
            "dinner",
            "attractions",
            "accommodation",
        ):
            if not str(getattr(p, field_name)).strip():
                return Verdict(name, False, f"day {p.day}: empty {field_name}")
        if _day_cities(p) is None:
            return Verdict(name, False, f"day {p.day}: bad current_city {p.current_city!r}")
    return Verdict(name, True)


def _check_sandbox(db, query, plans) -> Verdict:
    name = "is_valid_information_in_sandbox"
    for p in plans:
        cities = _day_cities(p)
        if cities is None:
            return Verdict(name, False, f"day {p.day}: unparseable current_city")
        src, dst = cities
        transport = p.transportation.strip()
        if transport not in ("", EMPTY_FIELD):
            if transport in _GROUND_MODES:
                if src is None:
                    return Verdict(
                        name, False, f"day {p.day}: ground transport without travel"
                    )
                if distance_search(db, src, dst) is None:
                    return Verdict(
                        name, False, f"day {p.day}: no distance record {src.display()} - {dst.display()}"
                    )
            else:
                flight = db._flight_by_number.get(transport)
                if flight is None:
                    return Verdict(name, False, f"day {p.day}: unknown flight {transport}")
                if src is None or flight.origin != src or flight.destination != dst:
                    return Verdict(
                        name, False, f"day {p.day}: flight {transport} does not serve the route"
                    )
                if flight.date != query.start_date + timedelta(days=p.day - 1):
                    return Verdict(
                        name, False, f"day {p.day}: flight {transport} is not on that date"
                    )
        for field_name, venue in _named_venues(p):
            try:
                _, venue_city = parse_venue(venue)
            except ValueError:
                return Verdict(name, False, f"day {p.day}: bad venue string {venue!r}")
            if field_name == "accommodation":
                hit = resolve_accommodation(db, venue)
            elif field_name == "attraction":
                hit = resolve_attraction(db, venue)
            else:
                hit = resolve_restaurant(db, venue)
            if hit is None:
                return Verdict(
                    name, False, f"day {p.day}: {field_name} {venue!r} not in sandbox"
                )
            if hit.city != venue_city:
                return Verdict(
                    name, False, f"day {p.day}: {field_name} city mismatch for {venue!r}"
                )
    return Verdict(name, True)


def _check_current_city(db, query, plans) -> Verdict:
    name = "is_valid_information_in_current_city"
    for p in plans:
        cities = _day_cities(p)
        if cities is None:
            return Verdict(name, False, f"day {p.day}: unparseable current_city")
        src, dst = cities
        allowed = {dst} if src is None else {src, dst}
        for field_name, venue in _named_venues(p):
            try:
                _, venue_city = parse_venue(venue)
            except ValueError:
                return Verdict(name, False, f"day {p.day}: bad venue string {venue!r}")
            if venue_city not in allowed:
                return Verdict(
                    name,
                    False,
                    f"day {p.day}: {field_name} {venue!r} outside the day's cities",
                )
    return Verdict(name, True)


def _check_reasonable_cities(db, query, plans) -> Verdict:
    name = "is_reasonable_visiting_city"
    first = _day_cities(plans[0])
    if first is None or first[0] is None:
        return Verdict(name, False, "day 1 must travel from the origin")
    if first[0] != query.origin:
        return Verdict(
            name, False, f"day 1 departs {first[0].display()}, not the origin"
        )
    last = _day_cities(plans[-1])
    if last is None or last[0] is None:
        return Verdict(name, False, "final day must travel back to the origin")
    if last[1] != query.origin:
        return Verdict(
            name, False, f"final day arrives {last[1].display()}, not the origin"
        )
    location = first[1]
    visited = [first[1]]
    for p in plans[1:]:
        cities = _day_cities(p)
        if cities is None:
            return Verdict(name, False, f"day {p.day}: unparseable current_city")
        src, dst = cities
        if src is not None:
            if src != location:
                return Verdict(
                    name, False, f"day {p.day}: departs {src.display()} but the "
                    f"traveler is in {location.display()}"
                )
            location = dst
            if dst != query.origin:
                visited.append(dst)
        else:
            if dst != location:
                return Verdict(
                    name, False, f"day {p.day}: claims {dst.display()} but the "
                    f"traveler is in {location.display()}"
                )
    distinct = list(dict.fromkeys(visited))
    if len(distinct) != query.visiting_city_number:
        return Verdict(
            name,
            False,
            f"visited {len(distinct)} cities, query asks for "
            f"{query.visiting_city_number}",
        )
    state_cities = city_search(db, query.destination)
    if state_cities is not None:
        wrong = [c for c in distinct if c.state != query.destination]
        if wrong:
            return Verdict(
                name, False, f"{wrong[0].display()} is outside {query.destination}"
            )
    else:
        wrong = [c for c in distinct if c.name != query.destination]
        if wrong:
            return Verdict(
                name, False, f"{wrong[0].display()} is not {query.destination}"
            )
    return Verdict(name, True)


def _check_restaurants(db, query, plans) -> Verdict:
    name = "is_valid_restaurants"
    seen: set[str] = set()
    for p in plans:
        for venue in p.meals():
            venue = venue.strip()
            if venue in ("", EMPTY_FIELD):
                continue
            if venue in seen:
                return Verdict(name, False, f"restaurant repeated: {venue!r}")
            seen.add(venue)
    return Verdict(name, True)


def _check_attractions(db, query, plans) -> Verdict:
    name = "is_valid_attractions"
    seen: set[str] = set()
    for p in plans:
        for venue in p.attraction_list():
            if venue in seen:
                return Verdict(name, False, f"attraction repeated: {venue!r}")
            seen.add(venue)
    return Verdict(name, True)


def _transport_modes_used(plans: Sequence[DayPlan]) -> set[str]:
    modes = set()
    for p in plans:
        t = p.transportation.strip()
        if t in ("", EMPTY_FIELD):
            continue
        if t == "Taxi":
            modes.add("taxi")
        elif t == "Self-driving":
            modes.add("self-driving")
        else:
            modes.add("flight")
    return modes


def _check_transport_mix(db, query, plans) -> Verdict:
    name = "is_valid_transportation"
    if plans[0].transportation.strip() in ("", EMPTY_FIELD):
        return Verdict(name, False, "day 1 has no transportation")
    modes = _transport_modes_used(plans)
    if "self-driving" in modes and "flight" in modes:
        return Verdict(name, False, "self-driving mixed with flights")
    if "self-driving" in modes and "taxi" in modes:
        return Verdict(name, False, "self-driving mixed with taxi")
    return Verdict(name, True)


def _check_accommodation_nights(db, query, plans) -> Verdict:
    name = "is_valid_accommodation"
    for venue, nights in _accommodation_runs(plans):
        acc = resolve_accommodation(db, venue)
        if acc is None:
            return Verdict(name, False, f"unknown accommodation {venue!r}")
        if nights < acc.minimum_nights:
            return Verdict(
                name,
                False,
                f"{venue!r} booked {nights} night(s), requires "
                f"{acc.minimum_nights}",
            )
    return Verdict(name, True)


def _check_cost(db, query, plans) -> Verdict:
    name = "valid_cost"
    total = 0
    for p in plans:
        try:
            total += cost_of_day(db, p, query.people)
        except UnknownVenue as exc:
            return Verdict(name, False, f"day {p.day}: cannot price {exc.name!r}")
    if total > query.budget:
        return Verdict(
            name,
            False,
            f"total {dollars(total)} exceeds budget {dollars(query.budget)}",
        )
    return Verdict(name, True)


def _resolved_accommodations(db, plans) -> list[Accommodation]:
    out = []
    for p in plans:
        value = p.accommodation.strip()
        if value in ("", EMPTY_FIELD):
            continue
        acc = resolve_accommodation(db, value)
        if acc is not None:
            out.append(acc)
    return out


def _check_room_rule(db, query, plans) -> Verdict:
    name = "valid_room_rule"
    if not query.house_rule:
        return Verdict(name, None)
    for acc in _resolved_accommodations(db, plans):
        if not house_rule_allows(acc, query.house_rule):
            return Verdict(
                name, False, f"{acc.name!r} forbids {query.house_rule!r}"
            )
    return Verdict(name, True)


def _check_cuisine(db, query, plans) -> Verdict:
    name = "valid_cuisine"
    if not query.cuisines:
        return Verdict(name, None)
    served: set[str] = set()
    for p in plans:
        for venue in p.meals():
            if venue.strip() in ("", EMPTY_FIELD):
                continue
            rest = resolve_restaurant(db, venue)
            if rest is not None:
                served.add(rest.cuisine)
    missing = sorted(set(query.cuisines) - served)
    if missing:
        return Verdict(name, False, f"cuisines never served: {missing}")
    return Verdict(name, True)


def _check_room_type(db, query, plans) -> Verdict:
    name = "valid_room_type"
    if not query.room_type:
        return Verdict(name, None)
    for acc in _resolved_accommodations(db, plans):
        if not room_type_matches(acc, query.room_type):
            return Verdict(
                name,
                False,
                f"{acc.name!r} is {acc.room_type}, query needs {query.room_type}",
            )
    return Verdict(name, True)


def _check_transport_restriction(db, query, plans) -> Verdict:
    name = "valid_transportation"
    if not query.transport_restriction:
        return Verdict(name, None)
    modes = _transport_modes_used(plans)
    if query.transport_restriction == "no flight" and "flight" in modes:
        return Verdict(name, False, "flights used despite 'no flight'")
    if query.transport_restriction == "no self-driving" and "self-driving" in modes:
        return Verdict(name, False, "self-driving used despite 'no self-driving'")
    return Verdict(name, True)


_CHECKS = {
    "is_not_absent": _check_is_not_absent,
    "is_valid_information_in_sandbox": _check_sandbox,
    "is_valid_information_in_current_city": _check_current_city,
    "is_reasonable_visiting_city": _check_reasonable_cities,
    "is_valid_restaurants": _check_restaurants,
    "is_valid_attractions": _check_attractions,
    "is_valid_transportation": _check_transport_mix,
    "is_valid_accommodation": _check_accommodation_nights,
    "valid_cost": _check_cost,
    "valid_room_rule": _check_room_rule,
    "valid_cuisine": _check_cuisine,
    "valid_room_type": _check_room_type,
    "valid_transportation": _check_transport_restriction,
}


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def evaluate(db: Database, query: TravelQuery, plans: Sequence[DayPlan]) -> EvalReport:
    """Run all thirteen constraints over one delivered plan."""
    plans = sorted(plans, key=lambda p: p.day)
    if not plans:
        return failed_report(query, "no plans delivered")

    verdicts: list[Verdict] = [_CHECKS[name](db, query, plans) for name in ALL_CONSTRAINTS]

    by_name = {v.name: v for v in verdicts}
    commonsense_pass = all(by_name[n].ok() for n in COMMONSENSE_CONSTRAINTS)
    hard_pass = all(by_name[n].ok() for n in HARD_CONSTRAINTS)
    if any(by_name[n].passed is False for n in GATE_CONSTRAINTS):
        hard_pass = False

    try:
        plan_cost: int | None = sum(cost_of_day(db, p, query.people) for p in plans)
    except UnknownVenue:
        plan_cost = None

    return EvalReport(
        query_id=query.query_id,
        delivered=True,
        verdicts=verdicts,
        commonsense_pass=commonsense_pass,
        hard_pass=hard_pass,
        final_pass=commonsense_pass and hard_pass,
        plan_cost=plan_cost,
        drift=drift_profile(db, query, plans),
        complexity=complexity_score(query),
    )


def drift_profile(
    db: Database, query: TravelQuery, plans: Sequence[DayPlan]
) -> list[dict[str, Any]]:
    """Per-day budget burn against the proportional envelope (d/D) * budget.

    Day costs are priced via cost_of_day; a day with an unpriceable venue
    falls back to its recorded cost so the profile stays total. Ratios are
    day cost over total budget, so they sum to the overall utilization.
    """
    profile = []
    cumulative = 0
    total_days = max(query.days, 1)
    for p in sorted(plans, key=lambda q: q.day):
        try:
            day_cost = cost_of_day(db, p, query.people)
        except UnknownVenue:
            day_cost = p.cost
        cumulative += day_cost
        # envelope check in exact integer arithmetic: cum/B <= d/D
        within_envelope = cumulative * total_days <= p.day * query.budget
        profile.append(
            {
                "day": p.day,
                "cost": dollars(day_cost),
                "cumulative": dollars(cumulative),
                "envelope": dollars(p.day * query.budget // total_days),
                "within_envelope": within_envelope,
                "within_total": cumulative <= query.budget,
                "ratio": day_cost / query.budget,
            }
        )
    return profile


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass
class MetricsSummary:
    delivery_rate: float
    commonsense_micro: float
    commonsense_macro: float
    hard_micro: float
    hard_macro: float
    final_pass_rate: float
    per_day_budget_satisfaction: list[float]
    plan_count: int

    def to_json(self) -> dict[str, Any]:
        return {
            "delivery_rate": self.delivery_rate,
            "commonsense_micro": self.commonsense_micro,
            "commonsense_macro": self.commonsense_macro,
            "hard_micro": self.hard_micro,
            "hard_macro": self.hard_macro,
            "final_pass_rate": self.final_pass_rate,
            "per_day_budget_satisfaction": self.per_day_budget_satisfaction,
            "plan_count": self.plan_count,
        }


def aggregate(reports: Sequence[EvalReport]) -> MetricsSummary:
    """Micro/macro pass rates. Not-applicable verdicts count as passes and
    sit in both numerator and denominator of the micro rates."""
    n = len(reports)
    if n == 0:
        return MetricsSummary(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, [], 0)

    def micro(names: Sequence[str]) -> float:
        passed = 0
        total = 0
        for r in reports:
            by_name = {v.name: v for v in r.verdicts}
            for name in names:
                total += 1
                if by_name[name].ok():
                    passed += 1
        return passed / total

    max_days = max((len(r.drift) for r in reports), default=0)
    per_day = []
    for d in range(1, max_days + 1):
        rows = [r.drift[d - 1]["within_envelope"] for r in reports if len(r.drift) >= d]
        per_day.append(sum(rows) / len(rows) if rows else 0.0)

    return MetricsSummary(
        delivery_rate=sum(r.delivered for r in reports) / n,
        commonsense_micro=micro(COMMONSENSE_CONSTRAINTS),
        commonsense_macro=sum(r.commonsense_pass for r in reports) / n,
        hard_micro=micro(HARD_CONSTRAINTS),
        hard_macro=sum(r.hard_pass for r in reports) / n,
        final_pass_rate=sum(r.final_pass for r in reports) / n,
        per_day_budget_satisfaction=per_day,
        plan_count=n,
    )


# ---------------------------------------------------------------------------
# Complexity
# ---------------------------------------------------------------------------

TIER_RANGES = {
    "easy": (9.0, 20.0),
    "medium": (20.1, 45.0),
    "hard": (45.1, 63.0),
}


def complexity_score(
    query: TravelQuery, n_c: int | None = None, per_tag: bool = False
) -> float:
    """D * C * (1 + 0.5 * N_c).

    By default N_c counts populated local-constraint fields (cuisine set,
    room type, house rule, transport restriction: one each). per_tag counts
    every requested cuisine separately.
    """
    if n_c is None:
        fields = query.local_constraint_fields()
        n_c = len(fields)
        if per_tag and query.cuisines:
            n_c += len(query.cuisines) - 1
    return query.days * query.visiting_city_number * (1 + 0.5 * n_c)


def tier_of(score: float) -> str | None:
    if 9.0 <= score <= 20.0:
        return "easy"
    if 20.0 < score <= 45.0:
        return "medium"
    if 45.0 < score <= 63.0:
        return "hard"
    return None
