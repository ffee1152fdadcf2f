"""Seeded corpus generator: venue worlds, queries, and reference itineraries.

Feasibility is guaranteed by construction rather than by rejection sampling.
For each query the generator builds a venue world, runs the actual planning
engine over it with an effectively unlimited budget, stores the resulting
itinerary as the reference plan, and prices the real budget at
ceil(reference cost * margin). Every admitted instance is re-checked against
all thirteen validation constraints; a failure there is a generator bug and
raises GenerationError instead of shipping a broken instance.

Identical arguments produce identical corpora byte for byte: each random
draw comes from one seeded generator, name pools are shuffled exactly once,
and reference runs execute single-threaded with zero tool latency.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field, replace
from datetime import date as Date, timedelta
from typing import Any, NamedTuple, Sequence

from .evaluator import evaluate, tier_of
from .money import ceil_to_dollars, dollars
from .monitor import DEFAULT_TAU, DuplicateIndex, canonicalize
from .orchestrator import SessionConfig, plan
from .policies import GreedyPolicy
from .sandbox.database import Database
from .sandbox.types import (
    Accommodation,
    Attraction,
    City,
    ConstraintUpdate,
    DistanceRecord,
    Flight,
    HOUSE_RULE_TAGS,
    ROOM_TYPES,
    Restaurant,
    TRANSPORT_RESTRICTIONS,
    TravelQuery,
    apply_update,
    validate_query,
)

# A provisional budget so large the reference run never hits the ledger cap.
_UNLIMITED_BUDGET = 10**9  # cents

TIER_MARGINS = {"easy": 1.5, "medium": 1.2, "hard": 1.2}

FLEX_SHAPES = ("local_add", "global_add", "local_then_global", "global_then_local")

# Fields a follow-up turn may defer. Transport restrictions shape the route
# itself, so they stay pinned from turn one.
_LOCAL_FLEX_FIELDS = ("cuisines", "room_type", "house_rule")

CUISINES = (
    "American",
    "Chinese",
    "French",
    "Indian",
    "Italian",
    "Mediterranean",
    "Mexican",
    "Thai",
)


class GenerationError(Exception):
    """The generator produced an instance that fails its own contract."""


class InfeasibleTier(Exception):
    """No (days, cities, constraints) combination lands in the tier."""


class NothingToRemove(Exception):
    """A flex scenario asked to defer a constraint the query does not have."""


class GeneratedCorpus(NamedTuple):
    database: Database
    queries: list[TravelQuery]
    reference_plans: dict[str, list]


# ---------------------------------------------------------------------------
# Difficulty tiers
# ---------------------------------------------------------------------------


def tier_combos(tier: str) -> list[tuple[int, int, int]]:
    """(days, cities, local-constraint count) triples whose score sits in tier.

    Cuisine requirements need at least one full stay day to host the meals,
    so itineraries that only travel cap the constraint count at three.
    """
    combos = []
    for days in (3, 5, 7):
        for cities in (1, 2, 3):
            if cities > days - 1:
                continue
            stay_days = days - cities - 1
            for n_c in range(0, 5):
                if n_c > 3 + (1 if stay_days else 0):
                    continue
                score = days * cities * (1 + 0.5 * n_c)
                if tier_of(score) == tier:
                    combos.append((days, cities, n_c))
    return combos


# ---------------------------------------------------------------------------
# Name pools
# ---------------------------------------------------------------------------

_STATE_DIRECTIONS = (
    "North", "South", "East", "West", "New",
    "Upper", "Lower", "Grand", "Old", "Port",
)
_STATE_STEMS = (
    "Avalon", "Bellmore", "Caldera", "Drummond", "Ellsworth", "Fairhall",
    "Garland", "Halloway", "Ingram", "Jessup", "Kendrick", "Larkspur",
    "Merritt", "Norwood", "Oakhurst", "Pemberton", "Quintana", "Redmond",
    "Sutherland", "Thornbury", "Underwood", "Vandermeer", "Westbrook",
    "Yarrow",
)

_CITY_QUALIFIERS = ("", "North ", "South ", "East ", "West ", "New ")
_CITY_STEMS = (
    "Alder", "Ash", "Birch", "Bramble", "Cedar", "Clover", "Elm", "Fern",
    "Fox", "Hazel", "Juniper", "Larch", "Laurel", "Linden", "Maple", "Moss",
    "Oak", "Rowan", "Sage", "Thistle", "Willow", "Wren",
)
_CITY_ENDINGS = (
    "borough", "bridge", "brook", "crest", "dale", "field", "ford", "gate",
    "glen", "haven", "hollow", "mere", "mont", "port", "ridge", "ton",
    "vale", "view", "wick", "wood",
)

_RESTAURANT_FIRST = (
    "Amber", "Brass", "Cinder", "Copper", "Crimson", "Dusty", "Emerald",
    "Gilded", "Golden", "Harbor", "Hidden", "Ivory", "Jade", "Lucky",
    "Marble", "Midnight", "Olive", "Rustic", "Saffron", "Scarlet", "Silver",
    "Smoky", "Velvet", "Wandering",
)
_RESTAURANT_SECOND = (
    "Anchor", "Barrel", "Basil", "Bell", "Candle", "Cask", "Clove", "Ember",
    "Fig", "Fork", "Garden", "Hearth", "Kettle", "Lantern", "Mill",
    "Orchard", "Pepper", "Plate", "Spindle", "Spoon", "Sprig", "Table",
    "Thyme", "Vine",
)
_RESTAURANT_KIND = (
    "Bistro", "Cantina", "Diner", "Eatery", "Grill", "Kitchen", "Tavern",
    "Trattoria",
)

_ATTRACTION_FIRST = (
    "Ancient", "Botanical", "Coastal", "Crystal", "Forgotten", "Grand",
    "Heritage", "Highland", "Historic", "Luminous", "Majestic", "Meridian",
    "National", "Obsidian", "Pioneer", "Riverside", "Royal", "Starlit",
    "Summit", "Twilight", "Vintage", "Whispering",
)
_ATTRACTION_SECOND = (
    "Archive", "Canyon", "Carillon", "Cavern", "Cliffs", "Falls", "Gallery",
    "Gardens", "Grove", "Lagoon", "Lighthouse", "Meadow", "Monument",
    "Observatory", "Pavilion", "Planetarium", "Promenade", "Quarry",
    "Sanctuary", "Terrace",
)
_ATTRACTION_KIND = (
    "Center", "Collection", "Conservatory", "Esplanade", "Museum", "Park",
    "Reserve", "Trail", "Walk", "Works",
)

_LODGING_FIRST = (
    "Bayside", "Beacon", "Cobblestone", "Driftwood", "Evergreen", "Foxglove",
    "Garnet", "Greenfield", "Harborview", "Hillcrest", "Ironwood",
    "Lakeshore", "Magnolia", "Meadowlark", "Nightingale", "Oakmont",
    "Primrose", "Quarryside", "Ridgeline", "Seabreeze", "Stonewall",
    "Sycamore", "Tamarack", "Wisteria",
)
_LODGING_SECOND = (
    "Atrium", "Cottage", "Court", "Crossing", "Haven", "Hideaway", "Hollow",
    "House", "Landing", "Lodge", "Manor", "Nook", "Perch", "Quarters",
    "Rest", "Retreat", "Roost", "Terrace", "Villa", "Willows",
)
_LODGING_KIND = (
    "Apartments", "Bungalow", "Guesthouse", "Homestead", "Inn", "Lofts",
    "Residence", "Rooms", "Stay", "Suites",
)


class _NamePool:
    """Deterministic dispenser of unique names.

    Candidates are a pre-shuffled cross product of word lists. take()
    additionally rejects fuzzy near-misses using the same similarity rule the
    run-time monitor applies, so two names drawn from one pool can never trip
    the duplicate detector against each other.
    """

    def __init__(
        self, rng: random.Random, candidates: Sequence[str], fuzzy: bool = True
    ):
        self._names = list(candidates)
        rng.shuffle(self._names)
        self._index = DuplicateIndex(DEFAULT_TAU) if fuzzy else None
        self._taken: set[str] = set()

    def take(self) -> str:
        while self._names:
            name = self._names.pop()
            key = canonicalize(name)
            if not key or key in self._taken:
                continue
            if self._index is not None:
                if self._index.collides(key):
                    continue
                self._index.add(key)
            self._taken.add(key)
            return name
        raise GenerationError("name pool exhausted; generate fewer instances")


def _product_names(*parts: Sequence[str]) -> list[str]:
    return [" ".join(combo) for combo in itertools.product(*parts)]


class _Pools:
    def __init__(self, rng: random.Random):
        self.states = _NamePool(
            rng, _product_names(_STATE_DIRECTIONS, _STATE_STEMS), fuzzy=False
        )
        self.cities = _NamePool(
            rng,
            [
                f"{q}{stem}{end}"
                for q in _CITY_QUALIFIERS
                for stem in _CITY_STEMS
                for end in _CITY_ENDINGS
            ],
            fuzzy=False,
        )
        self.restaurants = _NamePool(
            rng,
            _product_names(_RESTAURANT_FIRST, _RESTAURANT_SECOND, _RESTAURANT_KIND),
        )
        self.attractions = _NamePool(
            rng,
            _product_names(_ATTRACTION_FIRST, _ATTRACTION_SECOND, _ATTRACTION_KIND),
        )
        self.lodgings = _NamePool(
            rng, _product_names(_LODGING_FIRST, _LODGING_SECOND, _LODGING_KIND)
        )


class _FlightNumbers:
    def __init__(self, rng: random.Random):
        self._next = 1_000_000 + rng.randrange(6_000_000)

    def take(self) -> str:
        number = f"F{self._next}"
        self._next += 1
        return number


# ---------------------------------------------------------------------------
# Record batches
# ---------------------------------------------------------------------------


@dataclass
class _Records:
    cities: list[City] = field(default_factory=list)
    flights: list[Flight] = field(default_factory=list)
    accommodations: list[Accommodation] = field(default_factory=list)
    restaurants: list[Restaurant] = field(default_factory=list)
    attractions: list[Attraction] = field(default_factory=list)
    distances: list[DistanceRecord] = field(default_factory=list)

    def extend(self, other: "_Records") -> None:
        self.cities.extend(other.cities)
        self.flights.extend(other.flights)
        self.accommodations.extend(other.accommodations)
        self.restaurants.extend(other.restaurants)
        self.attractions.extend(other.attractions)
        self.distances.extend(other.distances)

    def database(self) -> Database:
        return Database(
            cities=list(self.cities),
            flights=list(self.flights),
            accommodations=list(self.accommodations),
            restaurants=list(self.restaurants),
            attractions=list(self.attractions),
            distances=list(self.distances),
        )


# ---------------------------------------------------------------------------
# Venue builders
# ---------------------------------------------------------------------------


def _concrete_room_type(rng: random.Random, wanted: str | None) -> str:
    if wanted is None:
        return rng.choice(sorted(ROOM_TYPES))
    if wanted == "not shared room":
        return rng.choice(("entire room", "private room"))
    return wanted


def _mismatched_room_type(rng: random.Random, wanted: str) -> str:
    if wanted == "not shared room":
        return "shared room"
    return rng.choice(sorted(ROOM_TYPES - {wanted}))


def _harmless_rules(rng: random.Random, needed_rule: str | None) -> tuple[str, ...]:
    """Prohibition strings that never conflict with the query's requirement."""
    safe = sorted(HOUSE_RULE_TAGS - ({needed_rule} if needed_rule else set()))
    count = rng.randrange(0, 3)
    return tuple(f"No {tag}" for tag in (rng.sample(safe, count) if count else ()))


def _valid_lodging(
    rng: random.Random,
    pools: _Pools,
    city: City,
    people: int,
    room_type: str | None,
    house_rule: str | None,
    price_cents: int,
) -> Accommodation:
    return Accommodation(
        name=pools.lodgings.take(),
        city=city,
        price=price_cents,
        room_type=_concrete_room_type(rng, room_type),
        house_rules=_harmless_rules(rng, house_rule),
        minimum_nights=1,
        maximum_occupancy=rng.randrange(max(people, 4), 9),
    )


def _decoy_lodging(
    rng: random.Random,
    pools: _Pools,
    city: City,
    people: int,
    room_type: str | None,
    house_rule: str | None,
) -> Accommodation:
    """A listing cheaper than every valid one, broken in exactly one way."""
    flaws = ["min_nights"]
    if people > 1:
        flaws.append("occupancy")
    if room_type:
        flaws.append("room_type")
    if house_rule:
        flaws.append("house_rule")
    flaw = rng.choice(flaws)

    concrete = _concrete_room_type(rng, room_type)
    rules = _harmless_rules(rng, house_rule)
    minimum_nights = 1
    occupancy = rng.randrange(4, 9)
    if flaw == "min_nights":
        minimum_nights = rng.randrange(8, 12)
    elif flaw == "occupancy":
        occupancy = people - 1
    elif flaw == "room_type":
        concrete = _mismatched_room_type(rng, room_type)
    else:
        rules = (f"No {house_rule}",) + rules
    return Accommodation(
        name=pools.lodgings.take(),
        city=city,
        price=rng.randrange(12, 46) * 100,
        room_type=concrete,
        house_rules=rules,
        minimum_nights=minimum_nights,
        maximum_occupancy=occupancy,
    )


def _city_lodgings(
    rng: random.Random,
    pools: _Pools,
    city: City,
    people: int,
    room_type: str | None,
    house_rule: str | None,
) -> list[Accommodation]:
    base = rng.randrange(60, 221) * 100
    out = [
        _valid_lodging(rng, pools, city, people, room_type, house_rule, base),
        _valid_lodging(
            rng, pools, city, people, room_type, house_rule,
            base + rng.randrange(25, 160) * 100,
        ),
        _valid_lodging(
            rng, pools, city, people, room_type, house_rule,
            base + rng.randrange(200, 420) * 100,
        ),
    ]
    for _ in range(rng.randrange(2, 5)):
        out.append(_decoy_lodging(rng, pools, city, people, room_type, house_rule))
    return out


def _city_restaurants(
    rng: random.Random,
    pools: _Pools,
    city: City,
    cuisines: frozenset[str],
    cost_range: tuple[int, int] = (12, 39),
) -> list[Restaurant]:
    low, high = cost_range
    out = [
        Restaurant(pools.restaurants.take(), city, cuisine, rng.randrange(low, high) * 100)
        for cuisine in sorted(cuisines)
    ]
    for _ in range(rng.randrange(2, 5)):
        out.append(
            Restaurant(
                pools.restaurants.take(),
                city,
                rng.choice(CUISINES),
                rng.randrange(low, high + 20) * 100,
            )
        )
    return out


def _city_attractions(
    rng: random.Random, pools: _Pools, city: City
) -> list[Attraction]:
    return [
        Attraction(pools.attractions.take(), city) for _ in range(6 + rng.randrange(2))
    ]


def _transport_records(
    rng: random.Random,
    numbers: _FlightNumbers,
    nodes: Sequence[City],
    start: Date,
    days: int,
) -> tuple[list[Flight], list[DistanceRecord]]:
    """Flights and distances for every pair of cities on every trip date.

    The visiting order is the planner's choice, so every leg it could pick
    has to exist.
    """
    distances = [
        DistanceRecord(a, b, rng.randrange(2800, 9500) / 10)
        for a, b in itertools.combinations(nodes, 2)
    ]
    flights = []
    for a, b in itertools.permutations(nodes, 2):
        for offset in range(days):
            for _ in range(1 + rng.randrange(2)):
                dep_minutes = rng.randrange(6 * 60, 22 * 60, 5)
                duration = 60 + rng.randrange(0, 180, 5)
                arr_minutes = (dep_minutes + duration) % (24 * 60)
                flights.append(
                    Flight(
                        flight_number=numbers.take(),
                        origin=a,
                        destination=b,
                        date=start + timedelta(days=offset),
                        price=rng.randrange(85, 266) * 100,
                        dep_time=f"{dep_minutes // 60:02d}:{dep_minutes % 60:02d}",
                        arr_time=f"{arr_minutes // 60:02d}:{arr_minutes % 60:02d}",
                    )
                )
    return flights, distances


# ---------------------------------------------------------------------------
# Reference runs
# ---------------------------------------------------------------------------


def _reference_config() -> SessionConfig:
    # Single-threaded, zero latency, one iteration: the cheapest fully
    # deterministic way to exercise the production planning path.
    return SessionConfig(k_max=1, tool_latency_ms=(0, 0), no_parallel=True)


def _reference_run(db: Database, query: TravelQuery) -> list:
    result = plan(db, query, GreedyPolicy(), _reference_config())
    if not result.feasible:
        raise GenerationError(
            f"{query.query_id}: reference run infeasible despite unlimited budget"
        )
    return result.plans


def _price_and_check(
    db: Database,
    provisional: TravelQuery,
    plans: list,
    margin: float,
) -> TravelQuery:
    """Set the budget from the reference cost, then re-validate everything."""
    reference_cost = sum(p.cost for p in plans)
    budget = ceil_to_dollars(math.ceil(reference_cost * margin))
    query = replace(provisional, budget=budget)
    validate_query(query)
    report = evaluate(db, query, plans)
    if not report.final_pass:
        failing = [v.name for v in report.verdicts if v.passed is False]
        raise GenerationError(
            f"{query.query_id}: reference plan fails {failing}"
        )
    return query


# ---------------------------------------------------------------------------
# Instance construction
# ---------------------------------------------------------------------------


def _pick_constraints(
    rng: random.Random, n_c: int, stay_days: int
) -> dict[str, Any]:
    allowed = ["house_rule", "room_type", "transport_restriction"]
    if stay_days:
        allowed.append("cuisines")
    chosen = set(rng.sample(sorted(allowed), n_c))
    values: dict[str, Any] = {
        "cuisines": frozenset(),
        "room_type": None,
        "house_rule": None,
        "transport_restriction": None,
    }
    if "cuisines" in chosen:
        values["cuisines"] = frozenset(rng.sample(CUISINES, rng.randrange(1, 4)))
    if "room_type" in chosen:
        values["room_type"] = rng.choice(
            sorted(ROOM_TYPES | {"not shared room"})
        )
    if "house_rule" in chosen:
        values["house_rule"] = rng.choice(sorted(HOUSE_RULE_TAGS))
    if "transport_restriction" in chosen:
        values["transport_restriction"] = rng.choice(sorted(TRANSPORT_RESTRICTIONS))
    return values


def _build_instance(
    rng: random.Random,
    pools: _Pools,
    numbers: _FlightNumbers,
    origin_state: str,
    query_id: str,
    days: int,
    cities_n: int,
    n_c: int,
    margin: float,
) -> tuple[_Records, TravelQuery, list]:
    stay_days = days - cities_n - 1
    constraints = _pick_constraints(rng, n_c, stay_days)
    people = rng.randrange(1, 5)
    start = Date(2022, 3, 1) + timedelta(days=rng.randrange(210))

    state = pools.states.take()
    destinations = [City(pools.cities.take(), state) for _ in range(cities_n)]
    origin = City(pools.cities.take(), origin_state)

    records = _Records(cities=[origin] + destinations)
    flights, distances = _transport_records(
        rng, numbers, records.cities, start, days
    )
    records.flights = flights
    records.distances = distances
    for city in destinations:
        records.accommodations.extend(
            _city_lodgings(
                rng, pools, city, people,
                constraints["room_type"], constraints["house_rule"],
            )
        )
        records.restaurants.extend(
            _city_restaurants(rng, pools, city, constraints["cuisines"])
        )
        records.attractions.extend(_city_attractions(rng, pools, city))

    if cities_n == 1 and rng.random() < 0.5:
        destination = destinations[0].name
    else:
        destination = state
    provisional = TravelQuery(
        query_id=query_id,
        origin=origin,
        destination=destination,
        start_date=start,
        days=days,
        visiting_city_number=cities_n,
        people=people,
        budget=_UNLIMITED_BUDGET,
        house_rule=constraints["house_rule"],
        cuisines=constraints["cuisines"],
        room_type=constraints["room_type"],
        transport_restriction=constraints["transport_restriction"],
    )

    db = records.database()
    plans = _reference_run(db, provisional)
    query = _price_and_check(db, provisional, plans, margin)
    return records, query, plans


def generate_instances(
    seed: int,
    count: int,
    tier: str = "easy",
    margin: float | None = None,
) -> GeneratedCorpus:
    """A corpus of `count` solvable queries over one shared venue database.

    Every query comes with a stored reference itinerary that satisfies all
    thirteen validation constraints within the assigned budget.
    """
    if tier not in TIER_MARGINS:
        raise ValueError(f"unknown tier {tier!r}; expected one of {sorted(TIER_MARGINS)}")
    if count < 1:
        raise ValueError("count must be >= 1")
    if margin is None:
        margin = TIER_MARGINS[tier]
    if margin < 1.0:
        raise ValueError("margin must be >= 1.0; tighter budgets cannot cover the plan")
    combos = tier_combos(tier)
    if not combos:
        raise InfeasibleTier(f"no trip shape reaches tier {tier!r}")

    rng = random.Random(seed)
    pools = _Pools(rng)
    numbers = _FlightNumbers(rng)
    origin_state = pools.states.take()

    world = _Records()
    queries: list[TravelQuery] = []
    references: dict[str, list] = {}
    for index in range(count):
        days, cities_n, n_c = combos[rng.randrange(len(combos))]
        records, query, plans = _build_instance(
            rng, pools, numbers, origin_state,
            f"{tier}-s{seed}-{index:03d}", days, cities_n, n_c, margin,
        )
        world.extend(records)
        queries.append(query)
        references[query.query_id] = plans
    return GeneratedCorpus(world.database(), queries, references)


# ---------------------------------------------------------------------------
# Recovery-stress corpus
# ---------------------------------------------------------------------------


def generate_bargaining_adversarial(
    seed: int, count: int, margin: float = 1.2
) -> GeneratedCorpus:
    """Instances engineered to make the first city choice fail.

    Each destination state holds two cities. The trap city looks cheapest on
    paper (its visible listings are mostly low-priced rooms with week-long
    minimum stays), but its only bookable room costs far more than the whole
    budget, so the first iteration dies on the budget ledger. The second city
    is priced like the reference plan, so one bargaining round recovers.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if margin < 1.0:
        raise ValueError("margin must be >= 1.0")

    rng = random.Random(seed)
    pools = _Pools(rng)
    numbers = _FlightNumbers(rng)
    origin_state = pools.states.take()

    world = _Records()
    queries: list[TravelQuery] = []
    references: dict[str, list] = {}
    for index in range(count):
        start = Date(2022, 3, 1) + timedelta(days=rng.randrange(210))
        state = pools.states.take()
        safe = City(pools.cities.take(), state)
        trap = City(pools.cities.take(), state)
        origin = City(pools.cities.take(), origin_state)
        days = 3

        flights, distances = _transport_records(
            rng, numbers, [origin, safe, trap], start, days
        )

        safe_records = _Records(cities=[origin, safe])
        safe_records.flights = [
            f for f in flights if trap not in (f.origin, f.destination)
        ]
        safe_records.distances = [
            d for d in distances if trap not in (d.origin, d.destination)
        ]
        base = rng.randrange(90, 161) * 100
        safe_records.accommodations = [
            _valid_lodging(rng, pools, safe, 1, None, None, base),
            _valid_lodging(
                rng, pools, safe, 1, None, None, base + rng.randrange(40, 120) * 100
            ),
        ]
        # Cheap tables keep even a meal-happy policy inside the margin.
        safe_records.restaurants = _city_restaurants(
            rng, pools, safe, frozenset(), cost_range=(8, 16)
        )
        safe_records.attractions = _city_attractions(rng, pools, safe)

        provisional = TravelQuery(
            query_id=f"adversarial-s{seed}-{index:03d}",
            origin=origin,
            destination=state,
            start_date=start,
            days=days,
            visiting_city_number=1,
            people=1,
            budget=_UNLIMITED_BUDGET,
        )
        plans = _reference_run(safe_records.database(), provisional)
        query = _price_and_check(safe_records.database(), provisional, plans, margin)

        # The trap: a rock-bottom price profile that cannot actually be
        # booked. Search-visible medians rank it first; the one listing
        # without a week-long minimum costs several times the budget.
        trap_records = _Records(cities=[trap])
        trap_records.flights = [
            f for f in flights if trap in (f.origin, f.destination)
        ]
        trap_records.distances = [
            d for d in distances if trap in (d.origin, d.destination)
        ]
        for _ in range(4 + rng.randrange(3)):
            trap_records.accommodations.append(
                Accommodation(
                    name=pools.lodgings.take(),
                    city=trap,
                    price=rng.randrange(14, 31) * 100,
                    room_type=_concrete_room_type(rng, None),
                    house_rules=_harmless_rules(rng, None),
                    minimum_nights=rng.randrange(8, 12),
                    maximum_occupancy=8,
                )
            )
        trap_records.accommodations.append(
            _valid_lodging(
                rng, pools, trap, 1, None, None, rng.randrange(4000, 8001) * 100
            )
        )
        trap_records.restaurants = _city_restaurants(
            rng, pools, trap, frozenset(), cost_range=(8, 16)
        )
        trap_records.attractions = _city_attractions(rng, pools, trap)

        world.extend(safe_records)
        world.extend(trap_records)
        queries.append(query)
        references[query.query_id] = plans
    return GeneratedCorpus(world.database(), queries, references)


# ---------------------------------------------------------------------------
# Multi-turn scenarios
# ---------------------------------------------------------------------------


@dataclass
class MultiTurnScenario:
    """A conversation: an under-constrained first turn plus follow-up turns.

    `query` is turn one; each update is one later turn. Applying every update
    in order reconstructs the fully-constrained query the scenario was built
    from.
    """

    scenario_id: str
    shape: str
    query: TravelQuery
    updates: tuple[ConstraintUpdate, ...]
    metadata: dict[str, Any]

    @property
    def turns(self) -> int:
        return 1 + len(self.updates)

    def final_query(self) -> TravelQuery:
        query = self.query
        for update in self.updates:
            query = apply_update(query, update)
        return query

    def to_json(self) -> dict[str, Any]:
        return {
            "scenario_id": self.scenario_id,
            "shape": self.shape,
            "query": self.query.to_json(),
            "updates": [u.to_json() for u in self.updates],
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "MultiTurnScenario":
        return cls(
            scenario_id=obj["scenario_id"],
            shape=obj["shape"],
            query=TravelQuery.from_json(obj["query"]),
            updates=tuple(ConstraintUpdate.from_json(u) for u in obj["updates"]),
            metadata=dict(obj.get("metadata") or {}),
        )


def flex_eligible(query: TravelQuery, shape: str) -> bool:
    """True when the query has something to defer for the given shape.

    Global constraints (budget, party size) always exist, so only shapes
    that defer a local constraint can be ineligible.
    """
    if shape not in FLEX_SHAPES:
        raise ValueError(f"unknown shape {shape!r}; expected one of {FLEX_SHAPES}")
    if shape == "global_add":
        return True
    return any(getattr(query, name) for name in _LOCAL_FLEX_FIELDS)


def _defer_local(
    rng: random.Random, query: TravelQuery
) -> tuple[TravelQuery, ConstraintUpdate, str]:
    present = [
        name for name in _LOCAL_FLEX_FIELDS if getattr(query, name)
    ]
    if not present:
        raise NothingToRemove(
            f"{query.query_id}: no local constraint available to defer"
        )
    name = rng.choice(present)
    update = ConstraintUpdate(name, getattr(query, name))
    blank: Any = frozenset() if name == "cuisines" else None
    return replace(query, **{name: blank}), update, name


def _defer_global(
    rng: random.Random, query: TravelQuery
) -> tuple[TravelQuery, ConstraintUpdate, str]:
    # Budgets are deferred more often than party size; a solo trip has no
    # party size to scale down, so it always defers the budget.
    if query.people > 1 and rng.random() >= 0.6:
        update = ConstraintUpdate("people", query.people)
        return replace(query, people=1), update, "people"
    update = ConstraintUpdate("budget", query.budget)
    return replace(query, budget=query.budget * 10), update, "budget"


def generate_flex_scenarios(
    base: Sequence[TravelQuery], seed: int, shape: str
) -> list[MultiTurnScenario]:
    """One scenario per base query: defer constraints, re-attach them in turns.

    local_add defers one local constraint (cuisine set, room type, or house
    rule, chosen uniformly among those present). global_add defers the budget
    (relaxed tenfold for turn one) or the party size (reset to one traveler).
    The two combined shapes defer one of each and re-attach them in the named
    order.
    """
    if shape not in FLEX_SHAPES:
        raise ValueError(f"unknown shape {shape!r}; expected one of {FLEX_SHAPES}")
    rng = random.Random(seed)
    scenarios = []
    for query in base:
        removed: dict[str, str | None] = {"local": None, "global": None}
        updates: list[ConstraintUpdate] = []
        stripped = query
        if shape in ("local_add", "local_then_global", "global_then_local"):
            stripped, local_update, local_name = _defer_local(rng, stripped)
            removed["local"] = local_name
            updates.append(local_update)
        if shape in ("global_add", "local_then_global", "global_then_local"):
            stripped, global_update, global_name = _defer_global(rng, stripped)
            removed["global"] = global_name
            if shape == "global_then_local":
                updates.insert(0, global_update)
            else:
                updates.append(global_update)
        metadata = {
            "removed": removed,
            "original_budget": dollars(query.budget),
            "original_people": query.people,
        }
        scenarios.append(
            MultiTurnScenario(
                scenario_id=f"{query.query_id}-{shape}",
                shape=shape,
                query=stripped,
                updates=tuple(updates),
                metadata=metadata,
            )
        )
    return scenarios
