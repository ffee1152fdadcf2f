"""Scripted-policy tests: cheapest-valid selection and the stress variants.

Most tests call the policies directly with hand-assembled observations, so
each decision is pinned without the execution loop in between; a few go
through run_day where the interplay with commits is the point.
"""

from __future__ import annotations

import dataclasses

import pytest

from tripsmith import GlobalState, run_day
from tripsmith.coordinator import (
    MODE_FLIGHT,
    MODE_SELF_DRIVING,
    MODE_TAXI,
    build_sub_goals,
)
from tripsmith.executor import (
    Abort,
    DayContext,
    Finish,
    Observation,
    ToolCall,
    VIOLATION_AVAILABILITY,
    VIOLATION_BUDGET,
)
from tripsmith.monitor import (
    BUDGET_EXCEEDED,
    CommitAction,
    DUPLICATE_VENUE,
    KIND_ACCOMMODATION,
    KIND_ATTRACTION,
    KIND_MEAL,
    canonicalize,
)
from tripsmith.policies import (
    DuplicatePronePolicy,
    FixedProbePolicy,
    GreedyPolicy,
    stay_nights,
)
from tripsmith.sandbox.database import (
    accommodation_search,
    attraction_search,
    distance_search,
    flight_search,
    restaurant_search,
)

from worlds import (
    TRACE_DEST,
    TRACE_FLIGHT_OUT,
    TRACE_ORIGIN,
    TRACE_ROOM,
    WESTON,
    mini_query,
    trace_query,
)


def make_ctx(q, day_index, cities=None, mode=MODE_FLIGHT, sigma=None):
    goals = build_sub_goals(q, cities or [WESTON], mode)
    sigma = sigma or GlobalState(q.budget)
    return DayContext(
        goal=goals[day_index],
        trip=tuple(goals),
        query=q,
        transport_mode=mode,
        sigma=sigma.view(),
    )


def obs(tool, result, **args):
    return Observation(tool=tool, args=args, result=result, summary="")


def rejection(item, kind, key, code, cost=0, remaining=0):
    return Observation(
        tool="commit_rejected",
        args={
            "item": item,
            "kind": kind,
            "key": key,
            "code": code,
            "cost": cost,
            "remaining": remaining,
        },
        result=code,
        summary="",
    )


def mini_day1_obs(db, q):
    return [
        obs("flight_search", flight_search(db, q.origin, WESTON, q.start_date)),
        obs("accommodation_search", accommodation_search(db, WESTON, q.people)),
    ]


def mini_day2_obs(db, q):
    return [
        obs("accommodation_search", accommodation_search(db, WESTON, q.people)),
        obs("restaurant_search", restaurant_search(db, WESTON)),
        obs("attraction_search", attraction_search(db, WESTON)),
    ]


# ---------------------------------------------------------------------------
# Accommodation selection
# ---------------------------------------------------------------------------


class TestGreedyAccommodation:
    def test_trace_world_picks_the_cheapest_bookable_room(self, trace_db):
        q = trace_query()
        goals = build_sub_goals(q, [TRACE_DEST], MODE_FLIGHT)
        sigma = GlobalState(q.budget)
        plan, fb, _ = run_day(
            trace_db, goals[0], sigma, GreedyPolicy(),
            query=q, trip=goals, transport_mode=MODE_FLIGHT,
        )
        assert plan.transportation == TRACE_FLIGHT_OUT
        assert plan.accommodation == f"{TRACE_ROOM}, Rockford(Illinois)"
        assert plan.cost == 47400 + 21000
        assert sigma.dump()["b_used"] == 68400

    def test_long_minimum_listings_are_filtered_on_short_stays(self, trace_db):
        # The $95 sublet (9-night minimum) undercuts every bookable room but
        # cannot be booked for a two-night stay.
        q = trace_query()
        ctx = make_ctx(q, 0, cities=[TRACE_DEST])
        observations = [
            obs("flight_search",
                flight_search(trace_db, TRACE_ORIGIN, TRACE_DEST, q.start_date)),
            obs("accommodation_search",
                accommodation_search(trace_db, TRACE_DEST, q.people)),
        ]
        decision = GreedyPolicy()(ctx, observations)
        assert isinstance(decision, Finish)
        assert decision.accommodation.name == TRACE_ROOM
        cheapest_listed = accommodation_search(trace_db, TRACE_DEST, q.people)[0]
        assert cheapest_listed.price < decision.accommodation.price

    def test_longer_stays_unlock_long_minimum_listings(self, trace_db):
        q = dataclasses.replace(trace_query(), days=9)
        ctx = make_ctx(q, 0, cities=[TRACE_DEST])
        observations = [
            obs("flight_search",
                flight_search(trace_db, TRACE_ORIGIN, TRACE_DEST, q.start_date)),
            obs("accommodation_search",
                accommodation_search(trace_db, TRACE_DEST, q.people)),
        ]
        decision = GreedyPolicy()(ctx, observations)
        # Eight nights admit the 8-night annex, now the cheapest valid room.
        assert decision.accommodation.name == "Extended Stay Garden Annex"

    def test_room_type_filter(self, mini_db):
        q = mini_query(room_type="entire room")
        decision = GreedyPolicy()(make_ctx(q, 0), mini_day1_obs(mini_db, q))
        assert decision.accommodation.name == "Walnut Loft"

    def test_not_shared_room_filter(self, mini_db):
        q = mini_query(room_type="not shared room")
        decision = GreedyPolicy()(make_ctx(q, 0), mini_day1_obs(mini_db, q))
        assert decision.accommodation.name == "Walnut Loft"  # $75 < $90

    def test_house_rule_filter(self, mini_db):
        q = mini_query(house_rule="visitors")  # Dockside bans visitors
        decision = GreedyPolicy()(make_ctx(q, 0), mini_day1_obs(mini_db, q))
        assert decision.accommodation.name == "Walnut Loft"

        q2 = mini_query(house_rule="parties")  # Walnut bans parties
        decision2 = GreedyPolicy()(make_ctx(q2, 0), mini_day1_obs(mini_db, q2))
        assert decision2.accommodation.name == "Dockside Bunkhouse"

    def test_rejected_rooms_are_skipped_on_retry(self, mini_db):
        q = mini_query()
        observations = mini_day1_obs(mini_db, q) + [
            rejection(
                "accommodation",
                KIND_ACCOMMODATION,
                canonicalize("Dockside Bunkhouse"),
                DUPLICATE_VENUE,
            )
        ]
        decision = GreedyPolicy()(make_ctx(q, 0), observations)
        assert decision.accommodation.name == "Walnut Loft"

    def test_abort_when_every_room_is_filtered_out(self, mini_db):
        q = mini_query(room_type="entire room", house_rule="parties")
        decision = GreedyPolicy()(make_ctx(q, 0), mini_day1_obs(mini_db, q))
        assert isinstance(decision, Abort)
        assert decision.violation_type == VIOLATION_AVAILABILITY


# ---------------------------------------------------------------------------
# Meal selection
# ---------------------------------------------------------------------------


class TestGreedyMeals:
    def test_covers_required_cuisines_with_cheapest_venues(self, mini_db):
        q = mini_query(cuisines=frozenset({"Italian", "Chinese", "French"}))
        decision = GreedyPolicy()(make_ctx(q, 1), mini_day2_obs(mini_db, q))
        assert isinstance(decision, Finish)
        picked = {slot: r.name for slot, r in decision.meals.items()}
        # Outstanding cuisines are walked alphabetically into the slots.
        assert picked == {
            "breakfast": "Bamboo Garden",   # cheapest Chinese
            "lunch": "Gullwing Cafe",       # cheapest (only) French
            "dinner": "Pasta Forte",        # cheapest Italian
        }

    def test_committed_cuisines_are_not_bought_again(self, mini_db):
        q = mini_query(cuisines=frozenset({"Italian", "Chinese"}))
        sigma = GlobalState(q.budget)
        assert sigma.commit(
            CommitAction(
                day=1, kind=KIND_MEAL,
                venue_key=canonicalize("Pasta Forte"),
                raw_name="Pasta Forte", cost=2000,
            )
        ) == "OK"
        decision = GreedyPolicy()(
            make_ctx(q, 1, sigma=sigma), mini_day2_obs(mini_db, q)
        )
        assert {s: r.name for s, r in decision.meals.items()} == {
            "breakfast": "Bamboo Garden"
        }

    def test_duplicate_rejection_means_the_cuisine_is_covered(self, mini_db):
        q = mini_query(cuisines=frozenset({"Italian", "Chinese"}))
        observations = mini_day2_obs(mini_db, q) + [
            rejection(
                "meal:breakfast", KIND_MEAL,
                canonicalize("Pasta Forte"), DUPLICATE_VENUE,
            )
        ]
        decision = GreedyPolicy()(make_ctx(q, 1), observations)
        assert {s: r.name for s, r in decision.meals.items()} == {
            "breakfast": "Bamboo Garden"
        }

    def test_slots_cap_the_number_of_cuisines(self, mini_db):
        q = mini_query(
            cuisines=frozenset({"American", "Chinese", "French", "Italian"})
        )
        decision = GreedyPolicy()(make_ctx(q, 1), mini_day2_obs(mini_db, q))
        assert {s: r.name for s, r in decision.meals.items()} == {
            "breakfast": "Iron Skillet",   # American
            "lunch": "Bamboo Garden",      # Chinese
            "dinner": "Gullwing Cafe",     # French
        }

    def test_unavailable_cuisines_are_left_open(self, mini_db):
        q = mini_query(cuisines=frozenset({"Thai", "Chinese"}))
        decision = GreedyPolicy()(make_ctx(q, 1), mini_day2_obs(mini_db, q))
        assert {s: r.name for s, r in decision.meals.items()} == {
            "breakfast": "Bamboo Garden"
        }

    def test_no_cuisine_request_means_no_restaurant_traffic(self, mini_db):
        q = mini_query()
        observations = [
            obs("accommodation_search",
                accommodation_search(mini_db, WESTON, q.people)),
            obs("attraction_search", attraction_search(mini_db, WESTON)),
        ]
        decision = GreedyPolicy()(make_ctx(q, 1), observations)
        assert isinstance(decision, Finish)
        assert decision.meals == {}

    def test_meals_on_travel_days_flag(self, mini_db):
        q = mini_query(cuisines=frozenset({"Italian"}))
        hungry = GreedyPolicy(meals_on_travel_days=True)
        decision = hungry(make_ctx(q, 0), mini_day1_obs(mini_db, q))
        assert isinstance(decision, ToolCall)
        assert decision.tool == "restaurant_search"

        default = GreedyPolicy()
        decision = default(make_ctx(q, 0), mini_day1_obs(mini_db, q))
        assert isinstance(decision, Finish)
        assert decision.meals == {}


# ---------------------------------------------------------------------------
# Transport selection
# ---------------------------------------------------------------------------


class TestGreedyTransport:
    def test_flight_mode_searches_then_takes_the_cheapest(self, mini_db):
        q = mini_query()
        ctx = make_ctx(q, 0)
        first = GreedyPolicy()(ctx, [])
        assert isinstance(first, ToolCall)
        assert first.tool == "flight_search"
        assert first.args == {
            "origin": q.origin,
            "destination": WESTON,
            "date": q.start_date,
        }
        flights = flight_search(mini_db, q.origin, WESTON, q.start_date)
        decision = GreedyPolicy()(
            ctx,
            [obs("flight_search", flights),
             obs("accommodation_search",
                 accommodation_search(mini_db, WESTON, q.people))],
        )
        assert decision.transport is flights[0]
        assert flights[0].flight_number == "F100"

    def test_no_flights_aborts(self, mini_db):
        q = mini_query()
        decision = GreedyPolicy()(make_ctx(q, 0), [obs("flight_search", [])])
        assert isinstance(decision, Abort)
        assert decision.violation_type == VIOLATION_AVAILABILITY

    @pytest.mark.parametrize(
        "mode,label", [(MODE_TAXI, "Taxi"), (MODE_SELF_DRIVING, "Self-driving")]
    )
    def test_ground_modes_use_the_distance_table(self, mini_db, mode, label):
        q = mini_query()
        ctx = make_ctx(q, 0, mode=mode)
        first = GreedyPolicy()(ctx, [])
        assert isinstance(first, ToolCall)
        assert first.tool == "distance_search"
        quote = distance_search(mini_db, q.origin, WESTON)
        decision = GreedyPolicy()(
            ctx,
            [obs("distance_search", quote),
             obs("accommodation_search",
                 accommodation_search(mini_db, WESTON, q.people))],
        )
        assert decision.transport == label

    def test_missing_road_aborts(self, mini_db):
        q = mini_query()
        ctx = make_ctx(q, 0, mode=MODE_TAXI)
        decision = GreedyPolicy()(ctx, [obs("distance_search", None)])
        assert isinstance(decision, Abort)


class TestBudgetReaction:
    def test_budget_rejection_aborts_with_the_deficit(self, mini_db):
        q = mini_query()
        observations = [
            rejection(
                "accommodation", KIND_ACCOMMODATION, "dockside bunkhouse",
                BUDGET_EXCEEDED, cost=5000, remaining=1200,
            )
        ]
        decision = GreedyPolicy()(make_ctx(q, 0), observations)
        assert isinstance(decision, Abort)
        assert decision.violation_type == VIOLATION_BUDGET
        assert decision.deficit == 3800


# ---------------------------------------------------------------------------
# Stress variants
# ---------------------------------------------------------------------------


class TestDuplicateProne:
    def test_books_the_same_restaurant_for_two_slots(self, mini_db):
        q = mini_query()
        decision = DuplicatePronePolicy()(
            make_ctx(q, 1), mini_day2_obs(mini_db, q)
        )
        assert isinstance(decision, Finish)
        names = {s: r.name for s, r in decision.meals.items()}
        assert names == {
            "breakfast": "Bamboo Garden", "lunch": "Bamboo Garden"
        }

    def test_substitutes_only_the_rejected_slot(self, mini_db):
        q = mini_query()
        observations = mini_day2_obs(mini_db, q) + [
            rejection(
                "meal:lunch", KIND_MEAL,
                canonicalize("Bamboo Garden"), DUPLICATE_VENUE,
            )
        ]
        decision = DuplicatePronePolicy()(make_ctx(q, 1), observations)
        assert {s: r.name for s, r in decision.meals.items()} == {
            "breakfast": "Bamboo Garden", "lunch": "Iron Skillet"
        }

    def test_ignores_the_shared_venue_ledger(self, mini_db):
        q = mini_query()
        sigma = GlobalState(q.budget)
        sigma.commit(
            CommitAction(
                day=1, kind=KIND_MEAL,
                venue_key=canonicalize("Bamboo Garden"),
                raw_name="Bamboo Garden", cost=1500,
            )
        )
        decision = DuplicatePronePolicy()(
            make_ctx(q, 1, sigma=sigma), mini_day2_obs(mini_db, q)
        )
        assert decision.meals["breakfast"].name == "Bamboo Garden"

    def test_attraction_rejections_still_substitute(self, mini_db):
        q = mini_query()
        observations = mini_day2_obs(mini_db, q) + [
            rejection(
                "attraction:0", KIND_ATTRACTION,
                canonicalize("Cliff Walk Gardens"), DUPLICATE_VENUE,
            )
        ]
        decision = DuplicatePronePolicy()(make_ctx(q, 1), observations)
        assert [a.name for a in decision.attractions] == ["Maritime Museum"]


class TestFixedProbe:
    @pytest.mark.parametrize("day_index", [0, 2])
    def test_every_day_costs_the_same_tool_budget(self, mini_db, day_index):
        q = mini_query()
        goals = build_sub_goals(q, [WESTON], MODE_FLIGHT)
        _, fb, _ = run_day(
            mini_db, goals[day_index], GlobalState(q.budget),
            FixedProbePolicy(calls_per_day=5),
            query=q, trip=goals, transport_mode=MODE_FLIGHT,
        )
        assert fb.status == "feasible"
        assert fb.n_tools_used == 5

    def test_smaller_probe_volume(self, mini_db):
        q = mini_query()
        goals = build_sub_goals(q, [WESTON], MODE_FLIGHT)
        _, fb, _ = run_day(
            mini_db, goals[1], GlobalState(q.budget),
            FixedProbePolicy(calls_per_day=2),
            query=q, trip=goals, transport_mode=MODE_FLIGHT,
        )
        assert fb.n_tools_used == 2


# ---------------------------------------------------------------------------
# Stay-length arithmetic
# ---------------------------------------------------------------------------


class TestStayNights:
    def test_all_days_of_one_run_agree(self, mini_db):
        q = mini_query()
        assert stay_nights(make_ctx(q, 0)) == 2
        assert stay_nights(make_ctx(q, 1)) == 2

    def test_return_day_has_no_nights(self, mini_db):
        q = mini_query()
        assert stay_nights(make_ctx(q, 2)) == 0

    def test_longer_single_city_stay(self, mini_db):
        q = mini_query(days=5)
        for day_index in range(4):
            assert stay_nights(make_ctx(q, day_index)) == 4
