"""End-to-end walkthrough: one query through the full planning session.

Builds a small two-city world by hand, plans a five-day trip with meal and
lodging constraints, prints the coordinator's task split, the day-by-day
itinerary, the budget ledger, and the thirteen-constraint scorecard, then
revises the finished plan after the traveler adds a new requirement.

Run:  python demos/plan_walkthrough.py
"""

from __future__ import annotations

from datetime import date

from tripsmith import (
    Accommodation,
    Attraction,
    City,
    ConstraintUpdate,
    Database,
    DistanceRecord,
    Restaurant,
    SessionConfig,
    TravelQuery,
    plan,
    revise,
)
from tripsmith.evaluator import complexity_score, tier_of
from tripsmith.money import dollars
from tripsmith.policies import GreedyPolicy

EASTHAVEN = City("Easthaven", "Calvera")
PORT_MIRA = City("Port Mira", "Solara")
CEDAR_FALLS = City("Cedar Falls", "Solara")


def build_world() -> Database:
    return Database(
        cities=[EASTHAVEN, PORT_MIRA, CEDAR_FALLS],
        flights=[],  # road trip country: every leg is priced by distance
        accommodations=[
            Accommodation("Mira Harbor Rooms", PORT_MIRA, 8500, "private room",
                          ("No pets", "No smoking"), 1, 3),
            Accommodation("Seabreeze Annex", PORT_MIRA, 9200, "private room",
                          ("No parties",), 1, 4),
            # A bargain that no five-day trip can actually book.
            Accommodation("Mira Monthly Sublet", PORT_MIRA, 3900, "private room",
                          (), 9, 2),
            Accommodation("Cedar Falls Lodge", CEDAR_FALLS, 7800, "private room",
                          ("No visitors",), 1, 4),
            Accommodation("Timberline Suites", CEDAR_FALLS, 11300, "entire room",
                          (), 1, 5),
        ],
        restaurants=[
            Restaurant("Trattoria Lume", PORT_MIRA, "Italian", 2400),
            Restaurant("Basil Boat", PORT_MIRA, "Thai", 1900),
            Restaurant("Quayside Fry", PORT_MIRA, "American", 1400),
            Restaurant("Ferro Rosso", CEDAR_FALLS, "Italian", 2600),
            Restaurant("Golden Orchid", CEDAR_FALLS, "Thai", 2100),
        ],
        attractions=[
            Attraction("Mira Lighthouse Walk", PORT_MIRA),
            Attraction("Harbor Glass Museum", PORT_MIRA),
            Attraction("Cedar Falls Canopy Trail", CEDAR_FALLS),
            Attraction("Old Mill Overlook", CEDAR_FALLS),
        ],
        distances=[
            DistanceRecord(EASTHAVEN, PORT_MIRA, 780.0),
            DistanceRecord(PORT_MIRA, CEDAR_FALLS, 95.0),
            DistanceRecord(EASTHAVEN, CEDAR_FALLS, 840.0),
        ],
    )


def build_query() -> TravelQuery:
    return TravelQuery(
        query_id="solara-5d",
        origin=EASTHAVEN,
        destination="Solara",
        start_date=date(2022, 7, 11),
        days=5,
        visiting_city_number=2,
        people=2,
        budget=70_000,  # $700, in cents like every amount in the engine
        cuisines=frozenset({"Italian", "Thai"}),
        room_type="private room",
    )


def show_session(result) -> None:
    meta = result.per_iteration[-1].meta_plan
    print(f"  transport mode: {meta.transport_mode}")
    print("  task split (budget hints are soft priors; the ledger is the cap):")
    for row in meta.to_json()["days"]:
        print(
            f"    day {row['day']}  {row['role']:<8} "
            f"{row['from']:>22} -> {row['to']:<22} "
            f"hint ${row['hint']:.2f}"
        )
    print("  itinerary:")
    for p in result.plans:
        stops = [f"transport={p.transportation}"] if p.transportation != "-" else []
        meals = [m for m in (p.breakfast, p.lunch, p.dinner) if m != "-"]
        if meals:
            stops.append("meals=" + " | ".join(m.split(",")[0] for m in meals))
        if p.attractions != "-":
            stops.append("see=" + p.attractions.split(",")[0])
        if p.accommodation != "-":
            stops.append("sleep=" + p.accommodation.split(",")[0])
        print(f"    day {p.day}: {p.current_city}")
        print(f"           {'; '.join(stops)}  (day cost ${dollars(p.cost):.2f})")
    report = result.report
    print(f"  spent ${dollars(result.sigma.b_used):.2f} "
          f"of ${dollars(result.sigma.b_total):.2f}; "
          f"checkpoints open: {result.sigma.checkpoint_depth}")
    print("  scorecard:")
    for v in report.verdicts:
        mark = "pass" if v.passed else ("n/a " if v.passed is None else "FAIL")
        print(f"    [{mark}] {v.name}")
    print(f"  commonsense={report.commonsense_pass} hard={report.hard_pass} "
          f"final={report.final_pass}")


def main() -> None:
    db = build_world()
    query = build_query()
    config = SessionConfig(seed=0, tool_latency_ms=(0, 0))

    score = complexity_score(query)
    print(f"query {query.query_id}: {query.days} days, "
          f"{query.visiting_city_number} cities, {query.people} people, "
          f"budget ${dollars(query.budget):.2f}")
    print(f"complexity score {score} -> tier {tier_of(score)!r}\n")

    print("planning...")
    result = plan(db, query, GreedyPolicy(), config)
    print(f"feasible={result.feasible} after {result.iterations_used} iteration(s)\n")
    show_session(result)

    print("\nthe travelers now want to bring their dog -- revising in place:")
    revised = revise(
        result, ConstraintUpdate("house_rule", "pets"), db, GreedyPolicy(), config
    )
    print(f"  replanned={revised.iterations_used > 0} "
          f"(0 iterations would mean the old plan already complied)")
    for p in revised.plans:
        if p.accommodation != "-":
            print(f"  day {p.day} now sleeps at {p.accommodation.split(',')[0]}")
    print(f"  final pass after revision: {revised.final_pass}")

    assert result.final_pass and revised.final_pass


if __name__ == "__main__":
    main()
