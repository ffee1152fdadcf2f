"""Trip decomposition: one query becomes per-day sub-goals.

The coordinator resolves the destination to concrete cities, ranks them by
affordability, splits the days across them, picks one transport mode for the
whole trip, and hands every day a soft budget hint. It also owns the
bargaining memory for a session: cities and (city set, route, mode) triples
that already failed are never proposed again.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from datetime import date as Date, timedelta
from statistics import median
from typing import Any, Iterable, Sequence

from .monitor import KIND_TRANSPORT, OK, CommitAction, GlobalState
from .sandbox.database import (
    Database,
    accommodation_search,
    city_search,
    distance_search,
    flight_search,
    restaurant_search,
)
from .sandbox.types import (
    City,
    ROLE_DEPARTURE,
    ROLE_RETURN,
    ROLE_STAY,
    ROLE_TRANSIT,
    TravelQuery,
)

logger = logging.getLogger(__name__)

# Role weights for budget hints, in integer hundredths so the floor division
# below stays exact: departure days carry a flight but no meals-heavy stay,
# return days are cheapest (no overnight), transit days sit in between.
ROLE_WEIGHT_HUNDREDTHS = {
    ROLE_DEPARTURE: 70,
    ROLE_STAY: 100,
    ROLE_TRANSIT: 85,
    ROLE_RETURN: 50,
}

MODE_FLIGHT = "flight"
MODE_TAXI = "taxi"
MODE_SELF_DRIVING = "self-driving"

# Tie-break preference when two modes price identically; flights win ties.
MODE_PREFERENCE = (MODE_FLIGHT, MODE_SELF_DRIVING, MODE_TAXI)

MEALS_PER_DAY = 3


class Unresolvable(Exception):
    """The destination names neither a known city nor a known state."""


class MultiCityInSingleCity(Exception):
    """A multi-city trip was requested against a single-city destination."""


class NoFeasibleCities(Exception):
    """No untried city combination remains for this session."""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubGoal:
    """One day's slice of the meta-plan."""

    day: int  # 1-based
    date: Date
    from_city: City
    to_city: City
    role: str
    budget_hint: int  # cents, soft prior
    people: int

    def is_travel_day(self) -> bool:
        return self.from_city != self.to_city


@dataclass
class MetaPlan:
    iteration: int
    transport_mode: str
    visiting_cities: list[City]
    sub_goals: list[SubGoal]

    def to_json(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "mode": self.transport_mode,
            "days": [
                {
                    "day": g.day,
                    "role": g.role,
                    "from": g.from_city.display(),
                    "to": g.to_city.display(),
                    "hint": g.budget_hint / 100,
                    "date": g.date.isoformat(),
                }
                for g in self.sub_goals
            ],
        }


# ---------------------------------------------------------------------------
# Destination resolution and city ranking
# ---------------------------------------------------------------------------


def resolve_destination(db: Database, query: TravelQuery) -> list[City]:
    """Candidate cities for the query's destination.

    A single-city trip may name either a city or a state; a multi-city trip
    must name a state (you cannot visit two cities inside one city).
    """
    dest = query.destination
    state_cities = city_search(db, dest)
    named_cities = sorted(db.cities_named(dest))
    if query.visiting_city_number == 1:
        if named_cities:
            return named_cities
        if state_cities:
            return state_cities
        raise Unresolvable(f"destination {dest!r} is neither a city nor a state")
    if state_cities:
        return state_cities
    if named_cities:
        raise MultiCityInSingleCity(
            f"destination {dest!r} is a city but {query.visiting_city_number} "
            "cities were requested"
        )
    raise Unresolvable(f"destination {dest!r} is neither a city nor a state")


def affordability_score(db: Database, city: City, query: TravelQuery) -> float:
    """Estimated daily outlay in budget-days (lower is more affordable).

    median nightly accommodation price plus three median-priced meals for the
    party, measured against the per-day budget B/D. Cities with no lodging or
    no restaurants are unaffordable by definition (inf).
    """
    rooms = [a.price for a in accommodation_search(db, city, query.people)]
    tables = [r.avg_cost for r in restaurant_search(db, city)]
    if not rooms or not tables:
        return float("inf")
    daily = median(rooms) + MEALS_PER_DAY * query.people * median(tables)
    per_day_budget = query.budget / max(query.days, 1)
    return daily / per_day_budget


def select_cities(
    db: Database,
    candidates: Sequence[City],
    query: TravelQuery,
    excluded: Iterable[City] = (),
    seed: int = 0,
) -> list[City]:
    """Rank feasible candidates by affordability, cheapest first.

    excluded carries cities already rejected during bargaining. The seed is
    accepted for interface stability; ranking is fully order-deterministic
    (score, then name), so equal seeds trivially agree.
    """
    del seed  # deterministic ranking needs no randomness
    dropped = set(excluded)
    scored = [
        (affordability_score(db, c, query), c)
        for c in candidates
        if c not in dropped
    ]
    ranked = [c for score, c in sorted(scored, key=lambda t: (t[0], t[1])) if score != float("inf")]
    return ranked


# ---------------------------------------------------------------------------
# Budget hints
# ---------------------------------------------------------------------------


def allocate_budget_hints(b_total: int, roles: Sequence[str]) -> list[int]:
    """Split the full budget over day roles; the parts sum to b_total exactly.

    Each day gets floor(b_total * w / sum(w)) cents; leftover cents are folded
    into the last STAY day (or the last interior day when the trip never
    pauses anywhere).
    """
    weights = [ROLE_WEIGHT_HUNDREDTHS[r] for r in roles]
    total_weight = sum(weights)
    hints = [(b_total * w) // total_weight for w in weights]
    remainder = b_total - sum(hints)
    if remainder:
        if ROLE_STAY in roles:
            target = len(roles) - 1 - list(reversed(roles)).index(ROLE_STAY)
        elif ROLE_TRANSIT in roles:
            target = len(roles) - 1 - list(reversed(roles)).index(ROLE_TRANSIT)
        else:
            target = len(roles) - 1
        hints[target] += remainder
    return hints


# ---------------------------------------------------------------------------
# Transport mode
# ---------------------------------------------------------------------------


def _route_legs(
    origin: City, cities: Sequence[City], query: TravelQuery
) -> list[tuple[City, City, Date]]:
    """(from, to, date) per inter-city leg, using the day schedule's dates."""
    roles = _day_roles(query.days, len(cities))
    legs: list[tuple[City, City, Date]] = []
    chain = [origin, *cities, origin]
    hop = 0
    for day_index, role in enumerate(roles):
        if role in (ROLE_DEPARTURE, ROLE_TRANSIT, ROLE_RETURN):
            legs.append(
                (
                    chain[hop],
                    chain[hop + 1],
                    query.start_date + timedelta(days=day_index),
                )
            )
            hop += 1
    return legs


def select_transport_mode(
    db: Database,
    legs: Sequence[tuple[City, City, Date]],
    restriction: str | None,
) -> tuple[str, int]:
    """Cheapest total-cost mode covering every leg; flights win ties.

    Returns (mode, estimated cents). Raises NoFeasibleCities when no
    permitted mode covers the route.
    """
    costs: dict[str, int | None] = {}

    flight_total = 0
    for origin, dest, date in legs:
        options = flight_search(db, origin, dest, date)
        if not options:
            flight_total = -1
            break
        flight_total += options[0].price
    costs[MODE_FLIGHT] = None if flight_total < 0 else flight_total

    taxi_total = 0
    drive_total = 0
    for origin, dest, _ in legs:
        quote = distance_search(db, origin, dest)
        if quote is None:
            taxi_total = drive_total = -1
            break
        taxi_total += quote.taxi_cost
        drive_total += quote.selfdrive_cost
    costs[MODE_TAXI] = None if taxi_total < 0 else taxi_total
    costs[MODE_SELF_DRIVING] = None if drive_total < 0 else drive_total

    if restriction == "no flight":
        costs[MODE_FLIGHT] = None
    elif restriction == "no self-driving":
        costs[MODE_SELF_DRIVING] = None

    best: tuple[int, int, str] | None = None
    for rank, mode in enumerate(MODE_PREFERENCE):
        cost = costs[mode]
        if cost is None:
            continue
        key = (cost, rank, mode)
        if best is None or key < best:
            best = key
    if best is None:
        raise NoFeasibleCities("no permitted transport mode covers the route")
    return best[2], best[0]


# ---------------------------------------------------------------------------
# Day schedule
# ---------------------------------------------------------------------------


def _nights_per_city(days: int, city_count: int) -> list[int]:
    """Split the trip's days - 1 nights as evenly as possible.

    Earlier cities absorb the surplus, matching the intuition that the first
    stop anchors the trip.
    """
    nights = days - 1
    base, extra = divmod(nights, city_count)
    return [base + (1 if i < extra else 0) for i in range(city_count)]


def _day_roles(days: int, city_count: int) -> list[str]:
    roles = [ROLE_DEPARTURE]
    nights = _nights_per_city(days, city_count)
    for i, n in enumerate(nights):
        roles.extend([ROLE_STAY] * (n - 1))
        if i < city_count - 1:
            roles.append(ROLE_TRANSIT)
    roles.append(ROLE_RETURN)
    return roles


def build_sub_goals(
    query: TravelQuery, cities: Sequence[City], mode: str
) -> list[SubGoal]:
    """Lay out the day-by-day route with roles, dates and budget hints."""
    del mode  # recorded on the MetaPlan; hints are mode-independent
    roles = _day_roles(query.days, len(cities))
    assert len(roles) == query.days
    hints = allocate_budget_hints(query.budget, roles)

    goals: list[SubGoal] = []
    location = query.origin
    next_city = 0
    for day_index, role in enumerate(roles):
        if role in (ROLE_DEPARTURE, ROLE_TRANSIT):
            destination = cities[next_city]
            next_city += 1
        elif role == ROLE_RETURN:
            destination = query.origin
        else:
            destination = location
        goals.append(
            SubGoal(
                day=day_index + 1,
                date=query.start_date + timedelta(days=day_index),
                from_city=location,
                to_city=destination,
                role=role,
                budget_hint=hints[day_index],
                people=query.people,
            )
        )
        location = destination
    return goals


# ---------------------------------------------------------------------------
# Session coordinator
# ---------------------------------------------------------------------------


@dataclass
class Coordinator:
    """Per-session planner with bargaining memory.

    uniform_hints / round_robin_cities implement the no-coordinator ablation:
    every day gets budget/days and cities are taken in rotation instead of by
    affordability.
    """

    seed: int = 0
    uniform_hints: bool = False
    round_robin_cities: bool = False
    excluded_cities: set[City] = field(default_factory=set)
    failed_triples: set[tuple[tuple[City, ...], str]] = field(default_factory=set)
    last_plan: MetaPlan | None = None

    def note_failure(self, feedback_days: Iterable[int]) -> None:
        """Record bargaining feedback: blame each reported day's city."""
        if self.last_plan is None:
            return
        goals = self.last_plan.sub_goals
        for day in feedback_days:
            if not 1 <= day <= len(goals):
                continue
            goal = goals[day - 1]
            city = goal.from_city if goal.role == ROLE_RETURN else goal.to_city
            if city != goals[0].from_city:  # never exclude the origin
                self.excluded_cities.add(city)
        if self.last_plan is not None:
            self.failed_triples.add(self._triple(self.last_plan))

    @staticmethod
    def _triple(plan: MetaPlan) -> tuple[tuple[City, ...], str]:
        return (tuple(plan.visiting_cities), plan.transport_mode)

    def _city_orders(
        self, db: Database, query: TravelQuery, iteration: int
    ) -> Iterable[tuple[City, ...]]:
        candidates = resolve_destination(db, query)
        wanted = query.visiting_city_number
        if self.round_robin_cities:
            pool = [c for c in sorted(candidates) if c not in self.excluded_cities]
            if len(pool) < wanted:
                return
            offset = (iteration - 1) % len(pool)
            rotated = pool[offset:] + pool[:offset]
            yield tuple(rotated[:wanted])
            return
        ranked = select_cities(
            db, candidates, query, excluded=self.excluded_cities, seed=self.seed
        )
        if len(ranked) < wanted:
            return
        for combo in itertools.combinations(ranked, wanted):
            yield combo

    def distribute_task(
        self,
        db: Database,
        query: TravelQuery,
        sigma: GlobalState,
        iteration: int,
    ) -> MetaPlan:
        """Produce the iteration's meta-plan and lock its mode into sigma.

        Tries city combinations in affordability order, skipping any
        (city set, mode) pair that already failed this session.
        """
        for combo in self._city_orders(db, query, iteration):
            legs = _route_legs(query.origin, combo, query)
            try:
                mode, _ = select_transport_mode(
                    db, legs, query.transport_restriction
                )
            except NoFeasibleCities:
                continue
            if (tuple(combo), mode) in self.failed_triples:
                continue
            goals = build_sub_goals(query, combo, mode)
            if self.uniform_hints:
                flat = query.budget // query.days
                hints = [flat] * query.days
                hints[-1] += query.budget - sum(hints)
                goals = [
                    SubGoal(
                        day=g.day,
                        date=g.date,
                        from_city=g.from_city,
                        to_city=g.to_city,
                        role=g.role,
                        budget_hint=hints[i],
                        people=g.people,
                    )
                    for i, g in enumerate(goals)
                ]
            plan = MetaPlan(
                iteration=iteration,
                transport_mode=mode,
                visiting_cities=list(combo),
                sub_goals=goals,
            )
            verdict = sigma.commit(
                CommitAction(
                    day=0,
                    kind=KIND_TRANSPORT,
                    venue_key="",
                    raw_name=f"mode lock: {mode}",
                    cost=0,
                    transport_mode=mode,
                )
            )
            if verdict != OK:
                logger.debug("mode lock rejected (%s); trying next combo", verdict)
                continue
            self.last_plan = plan
            logger.debug(
                "iteration %d meta-plan: cities=%s mode=%s",
                iteration,
                [c.display() for c in combo],
                mode,
            )
            return plan
        raise NoFeasibleCities(
            f"no untried feasible city set for {query.query_id} "
            f"(iteration {iteration})"
        )
