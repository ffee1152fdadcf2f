"""Failure recovery and monitor ablation, side by side.

Part 1 uses the adversarial generator to build a trap instance: the city the
coordinator ranks first only looks affordable (its cheap rooms demand more
nights than the trip has), so the first bargaining iteration fails on budget,
the shared ledger is rolled back, and the second iteration routes around the
trap.

Part 2 plans the same small trip twice with a deliberately sloppy policy that
books the cheapest restaurant for breakfast AND lunch: once with the duplicate
monitor active (the second booking is rejected and substituted) and once with
it disabled (the duplicate lands in the final plan and the evaluator fails it).

Run:  python demos/recovery_and_ablation.py
"""

from __future__ import annotations

import dataclasses
from datetime import date

from tripsmith import (
    Accommodation,
    Attraction,
    City,
    Database,
    DistanceRecord,
    Restaurant,
    SessionConfig,
    TravelQuery,
    plan,
)
from tripsmith.executor import STATUS_FEASIBLE
from tripsmith.generate import generate_bargaining_adversarial
from tripsmith.money import dollars
from tripsmith.policies import DuplicatePronePolicy, GreedyPolicy

FAST = SessionConfig(seed=0, tool_latency_ms=(0, 0))


def show_iterations(result) -> None:
    for rec in result.per_iteration:
        cities = ", ".join(c.display() for c in rec.meta_plan.visiting_cities)
        print(f"  iteration {rec.iteration}: route through {cities}")
        for fb in rec.feedbacks:
            if fb.status == STATUS_FEASIBLE:
                print(f"    day {fb.day}: feasible")
            else:
                detail = fb.violation_type or "cancelled"
                extra = f", short ${dollars(fb.deficit):.2f}" if fb.deficit else ""
                print(f"    day {fb.day}: {fb.status} ({detail}{extra})")
        outcome = "succeeded" if rec.feasible else "failed; ledger rolled back"
        print(f"    => iteration {outcome}")


def trap_recovery() -> None:
    print("=" * 72)
    print("Part 1: bargaining out of a budget trap")
    print("=" * 72)
    corpus = generate_bargaining_adversarial(seed=7, count=1)
    query = corpus.queries[0]
    print(f"query {query.query_id}: {query.days} days to {query.destination!r}, "
          f"budget ${dollars(query.budget):.2f}\n")

    result = plan(corpus.database, query, GreedyPolicy(), FAST)
    show_iterations(result)

    sigma = result.sigma
    booked = sorted({v["name"] for v in sigma.dump()["v_committed"]
                     if v["kind"] == "accommodation"})
    print(f"\n  final plan feasible={result.feasible}, "
          f"final_pass={result.final_pass}")
    print(f"  rooms left on the ledger: {booked}")
    print(f"  ledger spend ${dollars(sigma.b_used):.2f} == "
          f"evaluated plan cost ${dollars(result.report.plan_cost):.2f}; "
          f"open checkpoints: {sigma.checkpoint_depth}")
    assert result.final_pass and result.iterations_used >= 2


def duplicate_world() -> tuple[Database, TravelQuery]:
    home = City("Arbor", "Northfield")
    dest = City("Lakewatch", "Verdant")
    db = Database(
        cities=[home, dest],
        flights=[],
        accommodations=[
            Accommodation("Lakewatch Inn", dest, 6000, "entire room", (), 1, 2),
        ],
        restaurants=[
            Restaurant("Penny Diner", dest, "American", 900),
            Restaurant("Copper Skillet", dest, "American", 1500),
            Restaurant("Juniper Table", dest, "Mediterranean", 2200),
        ],
        attractions=[
            Attraction("Shorewalk Pier", dest),
            Attraction("Gorge Lookout", dest),
        ],
        distances=[DistanceRecord(home, dest, 120.0)],
    )
    query = TravelQuery(
        query_id="lakewatch-3d",
        origin=home,
        destination="Lakewatch",
        start_date=date(2022, 9, 5),
        days=3,
        visiting_city_number=1,
        people=1,
        budget=50_000,
    )
    return db, query


def monitor_ablation() -> None:
    print()
    print("=" * 72)
    print("Part 2: what the duplicate monitor buys")
    print("=" * 72)
    db, query = duplicate_world()
    policy = DuplicatePronePolicy()  # always re-books the cheapest restaurant

    for label, config in (
        ("monitor ON ", FAST),
        ("monitor OFF", dataclasses.replace(FAST, no_monitor=True)),
    ):
        result = plan(db, query, policy, config)
        stay = next(p for p in result.plans if p.breakfast != "-")
        verdict = result.report.verdict("is_valid_restaurants")
        print(f"\n  [{label}] day {stay.day}: "
              f"breakfast={stay.breakfast.split(',')[0]!r} "
              f"lunch={stay.lunch.split(',')[0]!r}")
        print(f"  [{label}] is_valid_restaurants={verdict.passed} "
              f"final_pass={result.final_pass}")
        if label.strip() == "monitor ON":
            assert stay.breakfast != stay.lunch and result.final_pass
        else:
            assert stay.breakfast == stay.lunch and not result.final_pass

    print("\nSame policy, same world: the monitor turned a deterministic "
          "evaluation failure\ninto a substitution at commit time.")


def main() -> None:
    trap_recovery()
    monitor_ablation()


if __name__ == "__main__":
    main()
