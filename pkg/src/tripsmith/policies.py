"""Scripted day-planning policies.

GreedyPolicy is the reference behavior: gather the day's information with as
few tool calls as possible, then pick the cheapest option that satisfies
every constraint. DuplicatePronePolicy is a stress variant that ignores the
shared committed-venue view (it only learns from its own rejections), used to
demonstrate what the monitor buys. FixedProbePolicy issues a fixed number of
tool calls per day so benchmark timings are comparable across days.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .coordinator import MODE_FLIGHT, MODE_SELF_DRIVING, MODE_TAXI
from .executor import (
    Abort,
    DayContext,
    Finish,
    Observation,
    PolicyDecision,
    ToolCall,
    VIOLATION_AVAILABILITY,
    VIOLATION_BUDGET,
)
from .evaluator import house_rule_allows, room_type_matches
from .monitor import (
    BUDGET_EXCEEDED,
    DUPLICATE_VENUE,
    KIND_ATTRACTION,
    KIND_MEAL,
    canonicalize,
    get_remaining_nights,
)
from .sandbox.types import (
    Attraction,
    MEAL_SLOTS,
    ROLE_STAY,
    Restaurant,
)


def _observed(observations: Sequence[Observation], tool: str) -> Observation | None:
    for obs in observations:
        if obs.tool == tool:
            return obs
    return None


def _rejections(observations: Sequence[Observation]) -> list[Observation]:
    return [obs for obs in observations if obs.tool == "commit_rejected"]


def _budget_abort(observations: Sequence[Observation]) -> Abort | None:
    """A budget rejection is terminal for a cheapest-first policy."""
    for obs in _rejections(observations):
        if obs.args.get("code") == BUDGET_EXCEEDED:
            deficit = max(0, obs.args["cost"] - obs.args["remaining"])
            return Abort(
                violation_type=VIOLATION_BUDGET,
                deficit=deficit,
                detail=f"cheapest option short by {deficit} cents",
            )
    return None


def _stay_entry_day(ctx: DayContext) -> int:
    """First day of the contiguous stay containing this day's city."""
    city = ctx.goal.to_city
    entry = ctx.goal.day
    while entry > 1 and ctx.trip[entry - 2].to_city == city:
        entry -= 1
    return entry


def stay_nights(ctx: DayContext) -> int:
    """Length of the whole accommodation run this day belongs to.

    Every day of a stay filters minimum-nights against the same run length,
    so parallel executors in one city all land on the same listing.
    """
    return get_remaining_nights(
        ctx.goal.to_city.display(), _stay_entry_day(ctx), ctx.trip
    )


@dataclass
class GreedyPolicy:
    """Cheapest-valid selection with retry on commit rejection.

    consult_shared_state=False drops the committed-venue lookups (the
    duplicate-prone stress behavior); meals_on_travel_days extends cuisine
    coverage onto departure/transit days.
    """

    consult_shared_state: bool = True
    meals_on_travel_days: bool = False

    # -- helpers ------------------------------------------------------------

    def _rejected_keys(
        self, observations: Sequence[Observation], kind: str, item: str | None = None
    ) -> set[str]:
        out = set()
        for obs in _rejections(observations):
            if obs.args.get("kind") != kind:
                continue
            if item is not None and obs.args.get("item") != item:
                continue
            out.add(obs.args["key"])
        return out

    def _committed_keys(self, ctx: DayContext, kind: str) -> set[str]:
        if not self.consult_shared_state:
            return set()
        return set(ctx.sigma.committed_keys(kind))

    def _pick_transport(self, ctx: DayContext, observations: Sequence[Observation]):
        """Returns (decision-or-None, transport selection)."""
        mode = ctx.transport_mode
        if mode == MODE_FLIGHT:
            obs = _observed(observations, "flight_search")
            if obs is None:
                return (
                    ToolCall(
                        "flight_search",
                        {
                            "origin": ctx.goal.from_city,
                            "destination": ctx.goal.to_city,
                            "date": ctx.goal.date,
                        },
                    ),
                    None,
                )
            flights = obs.result
            if not flights:
                return (
                    Abort(VIOLATION_AVAILABILITY, detail="no flights for leg"),
                    None,
                )
            return None, flights[0]
        obs = _observed(observations, "distance_search")
        if obs is None:
            return (
                ToolCall(
                    "distance_search",
                    {"origin": ctx.goal.from_city, "destination": ctx.goal.to_city},
                ),
                None,
            )
        if obs.result is None:
            return (
                Abort(VIOLATION_AVAILABILITY, detail="no distance record for leg"),
                None,
            )
        return None, ("Taxi" if mode == MODE_TAXI else "Self-driving")

    def _pick_accommodation(self, ctx: DayContext, observations: Sequence[Observation]):
        obs = _observed(observations, "accommodation_search")
        if obs is None:
            return (
                ToolCall(
                    "accommodation_search",
                    {"city": ctx.goal.to_city, "people": ctx.goal.people},
                ),
                None,
            )
        nights = stay_nights(ctx)
        query = ctx.query
        rejected = self._rejected_keys(observations, "accommodation")
        for acc in obs.result:  # already cheapest-first
            if acc.minimum_nights > nights:
                continue
            if not room_type_matches(acc, query.room_type):
                continue
            if not house_rule_allows(acc, query.house_rule):
                continue
            if canonicalize(acc.name) in rejected:
                continue
            return None, acc
        return (
            Abort(
                VIOLATION_AVAILABILITY,
                detail="no valid accommodation after filtering",
            ),
            None,
        )

    def _meal_candidates(
        self, ctx: DayContext, observations: Sequence[Observation]
    ) -> list[Restaurant]:
        obs = _observed(observations, "restaurant_search")
        return list(obs.result) if obs else []

    def _pick_meals(
        self, ctx: DayContext, observations: Sequence[Observation]
    ) -> dict[str, Restaurant]:
        """Cover outstanding required cuisines with the cheapest venues."""
        required = sorted(ctx.query.cuisines)
        if not required:
            return {}
        pool = self._meal_candidates(ctx, observations)
        committed = self._committed_keys(ctx, KIND_MEAL)
        covered = {r.cuisine for r in pool if canonicalize(r.name) in committed}
        # A duplicate rejection means a concurrently-planned day just booked
        # that venue, so its cuisine is covered; buying a second meal for the
        # same cuisine would only burn budget.
        duplicated = {
            obs.args["key"]
            for obs in _rejections(observations)
            if obs.args.get("kind") == KIND_MEAL
            and obs.args.get("code") == DUPLICATE_VENUE
        }
        covered |= {r.cuisine for r in pool if canonicalize(r.name) in duplicated}
        outstanding = [c for c in required if c not in covered]

        meals: dict[str, Restaurant] = {}
        taken: set[str] = set()
        slot_index = 0
        for cuisine in outstanding:
            if slot_index >= len(MEAL_SLOTS):
                break
            slot = MEAL_SLOTS[slot_index]
            rejected = self._rejected_keys(observations, KIND_MEAL, f"meal:{slot}")
            choice = None
            for rest in pool:
                key = canonicalize(rest.name)
                if rest.cuisine != cuisine:
                    continue
                if key in committed or key in taken or key in rejected:
                    continue
                choice = rest
                break
            if choice is None:
                # Either someone else just covered this cuisine or the city
                # simply lacks it; another stay day may still pick it up.
                continue
            meals[slot] = choice
            taken.add(canonicalize(choice.name))
            slot_index += 1
        return meals

    def _pick_attractions(
        self, ctx: DayContext, observations: Sequence[Observation]
    ) -> tuple[Attraction, ...]:
        obs = _observed(observations, "attraction_search")
        if obs is None:
            return ()
        committed = self._committed_keys(ctx, KIND_ATTRACTION)
        rejected = self._rejected_keys(observations, KIND_ATTRACTION)
        for attraction in obs.result:  # alphabetical
            key = canonicalize(attraction.name)
            if key in committed or key in rejected:
                continue
            return (attraction,)
        return ()

    # -- the policy ---------------------------------------------------------

    def __call__(
        self, ctx: DayContext, observations: Sequence[Observation]
    ) -> PolicyDecision:
        abort = _budget_abort(observations)
        if abort is not None:
            return abort

        travel = ctx.goal.is_travel_day()
        overnight = ctx.overnight()
        wants_meals = bool(ctx.query.cuisines) and (
            ctx.role == ROLE_STAY or (self.meals_on_travel_days and overnight)
        )
        wants_attraction = ctx.role == ROLE_STAY

        transport = None
        if travel:
            decision, transport = self._pick_transport(ctx, observations)
            if decision is not None:
                return decision
        accommodation = None
        if overnight:
            decision, accommodation = self._pick_accommodation(ctx, observations)
            if decision is not None:
                return decision
        if wants_meals and _observed(observations, "restaurant_search") is None:
            return ToolCall("restaurant_search", {"city": ctx.goal.to_city})
        if wants_attraction and _observed(observations, "attraction_search") is None:
            return ToolCall("attraction_search", {"city": ctx.goal.to_city})

        return Finish(
            transport=transport,
            accommodation=accommodation,
            meals=self._pick_meals(ctx, observations) if wants_meals else {},
            attractions=(
                self._pick_attractions(ctx, observations) if wants_attraction else ()
            ),
        )


@dataclass
class DuplicatePronePolicy(GreedyPolicy):
    """Greedy, but blind to the shared venue ledger and greedy about slots.

    On stay days it books the cheapest restaurant for breakfast *and* lunch;
    with the monitor enabled the second booking is rejected and substituted,
    without it the duplicate sails through to the evaluator.
    """

    consult_shared_state: bool = False

    def _pick_meals(
        self, ctx: DayContext, observations: Sequence[Observation]
    ) -> dict[str, Restaurant]:
        pool = self._meal_candidates(ctx, observations)
        if not pool:
            return {}
        meals: dict[str, Restaurant] = {}
        for slot in ("breakfast", "lunch"):
            rejected = self._rejected_keys(observations, KIND_MEAL, f"meal:{slot}")
            for rest in pool:
                if canonicalize(rest.name) in rejected:
                    continue
                meals[slot] = rest
                break
        return meals

    def __call__(
        self, ctx: DayContext, observations: Sequence[Observation]
    ) -> PolicyDecision:
        abort = _budget_abort(observations)
        if abort is not None:
            return abort
        travel = ctx.goal.is_travel_day()
        overnight = ctx.overnight()
        stay = ctx.role == ROLE_STAY

        transport = None
        if travel:
            decision, transport = self._pick_transport(ctx, observations)
            if decision is not None:
                return decision
        accommodation = None
        if overnight:
            decision, accommodation = self._pick_accommodation(ctx, observations)
            if decision is not None:
                return decision
        if stay and _observed(observations, "restaurant_search") is None:
            return ToolCall("restaurant_search", {"city": ctx.goal.to_city})
        if stay and _observed(observations, "attraction_search") is None:
            return ToolCall("attraction_search", {"city": ctx.goal.to_city})

        attractions: tuple[Attraction, ...] = ()
        if stay:
            obs = _observed(observations, "attraction_search")
            rejected = self._rejected_keys(observations, KIND_ATTRACTION)
            for attraction in obs.result if obs else ():
                if canonicalize(attraction.name) not in rejected:
                    attractions = (attraction,)
                    break
        return Finish(
            transport=transport,
            accommodation=accommodation,
            meals=self._pick_meals(ctx, observations) if stay else {},
            attractions=attractions,
        )


@dataclass
class FixedProbePolicy(GreedyPolicy):
    """Issue exactly calls_per_day tool calls, then finish minimally.

    Benchmark helper: with equal call counts on every day, the parallel
    speedup of the day phase is governed purely by the batch shape.
    """

    calls_per_day: int = 4

    def __call__(
        self, ctx: DayContext, observations: Sequence[Observation]
    ) -> PolicyDecision:
        abort = _budget_abort(observations)
        if abort is not None:
            return abort

        travel = ctx.goal.is_travel_day()
        overnight = ctx.overnight()
        searches = [o for o in observations if o.tool != "commit_rejected"]

        transport = None
        if travel:
            decision, transport = self._pick_transport(ctx, observations)
            if decision is not None:
                return decision
        accommodation = None
        if overnight:
            decision, accommodation = self._pick_accommodation(ctx, observations)
            if decision is not None:
                return decision
        if len(searches) < self.calls_per_day:
            return ToolCall("attraction_search", {"city": ctx.goal.to_city})
        return Finish(transport=transport, accommodation=accommodation)
