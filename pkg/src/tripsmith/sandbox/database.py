"""Immutable venue database and the agent-facing search tools.

A Database is loaded once from a directory of CSV files and never mutated by
planning. Search results come back in deterministic order: ascending price
(or cost) with ties broken by name, so "pick the first result" is a
reproducible decision.

Costs follow one arithmetic everywhere:

    day cost = transport + people * sum(meal costs) + accommodation night

Ground transport prices are whole dollars, floor(km * rate), with taxi at
$1.00/km and self-driving at $0.05/km. Attractions are free.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path

from ..money import format_dollars_csv, parse_dollars
from .types import (
    Accommodation,
    Attraction,
    City,
    DayPlan,
    DistanceRecord,
    Flight,
    Restaurant,
    normalize_room_type,
    parse_current_city,
    parse_venue,
)

logger = logging.getLogger(__name__)

TAXI_RATE_DOLLARS_PER_KM = 1.00
SELF_DRIVING_RATE_DOLLARS_PER_KM = 0.05

CSV_FILES = (
    "cities.csv",
    "flights.csv",
    "accommodations.csv",
    "restaurants.csv",
    "attractions.csv",
    "distances.csv",
)


class MissingFile(Exception):
    """A required CSV file is absent from the database directory."""


class SchemaViolation(Exception):
    """A CSV row failed validation.

    Carries enough context (file, row number, column, reason) to point at the
    offending cell.
    """

    def __init__(self, file: str, row: int, column: str, reason: str):
        super().__init__(f"{file}:{row} [{column}] {reason}")
        self.file = file
        self.row = row
        self.column = column
        self.reason = reason


class UnknownVenue(Exception):
    """A plan references a venue the database cannot resolve."""

    def __init__(self, name: str, field_name: str):
        super().__init__(f"unknown {field_name}: {name!r}")
        self.name = name
        self.field_name = field_name


# ---------------------------------------------------------------------------
# Database container
# ---------------------------------------------------------------------------


@dataclass
class Database:
    cities: list[City]
    flights: list[Flight]
    accommodations: list[Accommodation]
    restaurants: list[Restaurant]
    attractions: list[Attraction]
    distances: list[DistanceRecord]

    # Derived indexes, built once in __post_init__.
    _by_state: dict[str, list[City]] = field(default_factory=dict, repr=False)
    _by_city_name: dict[str, list[City]] = field(default_factory=dict, repr=False)
    _flight_by_number: dict[str, Flight] = field(default_factory=dict, repr=False)
    _flights_by_leg: dict[tuple[City, City, Date], list[Flight]] = field(
        default_factory=dict, repr=False
    )
    _accommodations_by_city: dict[City, list[Accommodation]] = field(
        default_factory=dict, repr=False
    )
    _restaurants_by_city: dict[City, list[Restaurant]] = field(
        default_factory=dict, repr=False
    )
    _attractions_by_city: dict[City, list[Attraction]] = field(
        default_factory=dict, repr=False
    )
    _distance_by_pair: dict[tuple[City, City], DistanceRecord] = field(
        default_factory=dict, repr=False
    )

    def __post_init__(self) -> None:
        for c in self.cities:
            self._by_state.setdefault(c.state, []).append(c)
            self._by_city_name.setdefault(c.name, []).append(c)
        for group in self._by_state.values():
            group.sort()
        for f in self.flights:
            self._flight_by_number[f.flight_number] = f
            self._flights_by_leg.setdefault(
                (f.origin, f.destination, f.date), []
            ).append(f)
        for group in self._flights_by_leg.values():
            group.sort(key=lambda f: (f.price, f.flight_number))
        for a in self.accommodations:
            self._accommodations_by_city.setdefault(a.city, []).append(a)
        for group in self._accommodations_by_city.values():
            group.sort(key=lambda a: (a.price, a.name))
        for r in self.restaurants:
            self._restaurants_by_city.setdefault(r.city, []).append(r)
        for group in self._restaurants_by_city.values():
            group.sort(key=lambda r: (r.avg_cost, r.name))
        for t in self.attractions:
            self._attractions_by_city.setdefault(t.city, []).append(t)
        for group in self._attractions_by_city.values():
            group.sort(key=lambda t: t.name)
        for d in self.distances:
            self._distance_by_pair[(d.origin, d.destination)] = d

    def states(self) -> list[str]:
        return sorted(self._by_state)

    def cities_named(self, name: str) -> list[City]:
        return list(self._by_city_name.get(name, ()))

    def has_city(self, city: City) -> bool:
        return city in self._by_city_name.get(city.name, ())


# ---------------------------------------------------------------------------
# Search tools
# ---------------------------------------------------------------------------


def city_search(db: Database, state: str) -> list[City] | None:
    """Cities of a state, alphabetically. None when the state is unknown."""
    group = db._by_state.get(state)
    return list(group) if group is not None else None


def flight_search(
    db: Database, origin: City, destination: City, date: Date
) -> list[Flight]:
    """Flights for one leg on one date, cheapest first."""
    return list(db._flights_by_leg.get((origin, destination, date), ()))


def accommodation_search(db: Database, city: City, people: int) -> list[Accommodation]:
    """Accommodations in a city that can host the party, cheapest first."""
    return [
        a
        for a in db._accommodations_by_city.get(city, ())
        if a.maximum_occupancy >= people
    ]


def restaurant_search(db: Database, city: City) -> list[Restaurant]:
    """Restaurants in a city, cheapest average cost first."""
    return list(db._restaurants_by_city.get(city, ()))


def attraction_search(db: Database, city: City) -> list[Attraction]:
    """Attractions in a city, alphabetical."""
    return list(db._attractions_by_city.get(city, ()))


@dataclass(frozen=True)
class DistanceQuote:
    km: float
    taxi_cost: int  # cents
    selfdrive_cost: int  # cents


def ground_cost(km: float, rate_dollars_per_km: float) -> int:
    """Whole-dollar ground fare in cents: floor(km * rate) dollars."""
    return int(math.floor(km * rate_dollars_per_km)) * 100


def distance_search(db: Database, origin: City, destination: City) -> DistanceQuote | None:
    """Distance and ground fares for a pair, or None when unrecorded.

    Lookups are symmetric: a record for (A, B) answers (B, A) too.
    """
    rec = db._distance_by_pair.get((origin, destination))
    if rec is None:
        rec = db._distance_by_pair.get((destination, origin))
    if rec is None:
        return None
    return DistanceQuote(
        km=rec.km,
        taxi_cost=ground_cost(rec.km, TAXI_RATE_DOLLARS_PER_KM),
        selfdrive_cost=ground_cost(rec.km, SELF_DRIVING_RATE_DOLLARS_PER_KM),
    )


# ---------------------------------------------------------------------------
# Venue resolution shared by pricing and validity checks
# ---------------------------------------------------------------------------


def canonical_name(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    out = []
    for ch in text.lower():
        if ch.isalnum() or ch.isspace():
            out.append(ch)
        else:
            out.append(" ")
    return " ".join("".join(out).split())


def _match_by_containment(plan_name: str, candidates: list[str]) -> str | None:
    """Resolve a plan name against candidate names in one city.

    Exact canonical equality wins; otherwise the first candidate (input
    order, which search keeps deterministic) whose canonical form contains
    or is contained by the plan name.
    """
    want = canonical_name(plan_name)
    if not want:
        return None
    canon = [(c, canonical_name(c)) for c in candidates]
    for original, cand in canon:
        if cand == want:
            return original
    for original, cand in canon:
        if want in cand or cand in want:
            return original
    return None


def resolve_restaurant(db: Database, venue: str) -> Restaurant | None:
    try:
        name, city = parse_venue(venue)
    except ValueError:
        return None
    pool = db._restaurants_by_city.get(city, ())
    hit = _match_by_containment(name, [r.name for r in pool])
    if hit is None:
        return None
    return next(r for r in pool if r.name == hit)


def resolve_attraction(db: Database, venue: str) -> Attraction | None:
    try:
        name, city = parse_venue(venue)
    except ValueError:
        return None
    pool = db._attractions_by_city.get(city, ())
    hit = _match_by_containment(name, [t.name for t in pool])
    if hit is None:
        return None
    return next(t for t in pool if t.name == hit)


def resolve_accommodation(db: Database, venue: str) -> Accommodation | None:
    try:
        name, city = parse_venue(venue)
    except ValueError:
        return None
    pool = db._accommodations_by_city.get(city, ())
    hit = _match_by_containment(name, [a.name for a in pool])
    if hit is None:
        return None
    return next(a for a in pool if a.name == hit)


# ---------------------------------------------------------------------------
# Day cost
# ---------------------------------------------------------------------------


def cost_of_day(
    db: Database,
    plan: DayPlan,
    people: int,
    per_person_transport: bool = False,
) -> int:
    """Exact cents cost of one day plan.

    transport + people * meals + accommodation. Transport is *not* scaled by
    party size unless per_person_transport is set; attractions are free.
    Raises UnknownVenue when a named venue cannot be resolved.
    """
    total = 0

    transport = plan.transportation.strip()
    if transport not in ("", "-"):
        try:
            src, dst = parse_current_city(plan.current_city)
        except ValueError as exc:
            # A day whose location cannot be parsed cannot be priced.
            raise UnknownVenue(transport, "transportation") from exc
        if transport in ("Taxi", "Self-driving"):
            if src is None:
                raise UnknownVenue(transport, "transportation")
            quote = distance_search(db, src, dst)
            if quote is None:
                raise UnknownVenue(transport, "transportation")
            fare = quote.taxi_cost if transport == "Taxi" else quote.selfdrive_cost
        else:
            flight = db._flight_by_number.get(transport)
            if flight is None:
                raise UnknownVenue(transport, "transportation")
            fare = flight.price
        total += fare * people if per_person_transport else fare

    meal_total = 0
    for slot, venue in zip(("breakfast", "lunch", "dinner"), plan.meals()):
        if venue.strip() in ("", "-"):
            continue
        rest = resolve_restaurant(db, venue)
        if rest is None:
            raise UnknownVenue(venue, slot)
        meal_total += rest.avg_cost
    total += people * meal_total

    if plan.accommodation.strip() not in ("", "-"):
        acc = resolve_accommodation(db, plan.accommodation)
        if acc is None:
            raise UnknownVenue(plan.accommodation, "accommodation")
        total += acc.price

    return total


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

_HEADERS = {
    "cities.csv": ["city", "state"],
    "flights.csv": [
        "flight_number",
        "origin_city",
        "origin_state",
        "dest_city",
        "dest_state",
        "date",
        "price",
        "dep_time",
        "arr_time",
    ],
    "accommodations.csv": [
        "name",
        "city",
        "state",
        "price",
        "room_type",
        "house_rules",
        "minimum_nights",
        "maximum_occupancy",
    ],
    "restaurants.csv": ["name", "city", "state", "cuisine", "avg_cost"],
    "attractions.csv": ["name", "city", "state"],
    "distances.csv": ["origin_city", "origin_state", "dest_city", "dest_state", "km"],
}


def _read_rows(path: Path, file: str) -> list[dict[str, str]]:
    full = path / file
    if not full.exists():
        raise MissingFile(str(full))
    with open(full, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _HEADERS[file]:
            raise SchemaViolation(file, 1, "header", f"expected {_HEADERS[file]}")
        return list(reader)


def _money(file: str, row: int, column: str, raw: str) -> int:
    try:
        value = parse_dollars(raw)
    except ValueError:
        raise SchemaViolation(file, row, column, f"not a price: {raw!r}") from None
    if value < 0:
        raise SchemaViolation(file, row, column, "price must be non-negative")
    return value


def _int(file: str, row: int, column: str, raw: str, minimum: int) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise SchemaViolation(file, row, column, f"not an integer: {raw!r}") from None
    if value < minimum:
        raise SchemaViolation(file, row, column, f"must be >= {minimum}")
    return value


def _date(file: str, row: int, column: str, raw: str) -> Date:
    try:
        return Date.fromisoformat(raw)
    except ValueError:
        raise SchemaViolation(file, row, column, f"not a date: {raw!r}") from None


def load_database(path: str | Path) -> Database:
    """Load and validate the six-file CSV schema under one directory."""
    path = Path(path)

    cities: list[City] = []
    seen_cities: set[City] = set()
    for i, row in enumerate(_read_rows(path, "cities.csv"), start=2):
        name, state = row["city"].strip(), row["state"].strip()
        if not name:
            raise SchemaViolation("cities.csv", i, "city", "empty")
        if not state:
            raise SchemaViolation("cities.csv", i, "state", "empty")
        city = City(name, state)
        if city in seen_cities:
            raise SchemaViolation("cities.csv", i, "city", f"duplicate {city.display()}")
        seen_cities.add(city)
        cities.append(city)

    def known(file: str, i: int, city_col: str, state_col: str, row: dict) -> City:
        city = City(row[city_col].strip(), row[state_col].strip())
        if city not in seen_cities:
            raise SchemaViolation(file, i, city_col, f"unknown city {city.display()}")
        return city

    flights: list[Flight] = []
    seen_numbers: set[str] = set()
    for i, row in enumerate(_read_rows(path, "flights.csv"), start=2):
        number = row["flight_number"].strip()
        if not number:
            raise SchemaViolation("flights.csv", i, "flight_number", "empty")
        if number in seen_numbers:
            raise SchemaViolation("flights.csv", i, "flight_number", f"duplicate {number}")
        seen_numbers.add(number)
        origin = known("flights.csv", i, "origin_city", "origin_state", row)
        dest = known("flights.csv", i, "dest_city", "dest_state", row)
        if origin == dest:
            raise SchemaViolation("flights.csv", i, "dest_city", "origin equals destination")
        flights.append(
            Flight(
                flight_number=number,
                origin=origin,
                destination=dest,
                date=_date("flights.csv", i, "date", row["date"]),
                price=_money("flights.csv", i, "price", row["price"]),
                dep_time=row["dep_time"].strip(),
                arr_time=row["arr_time"].strip(),
            )
        )

    accommodations: list[Accommodation] = []
    for i, row in enumerate(_read_rows(path, "accommodations.csv"), start=2):
        city = known("accommodations.csv", i, "city", "state", row)
        try:
            room_type = normalize_room_type(row["room_type"])
        except ValueError as exc:
            raise SchemaViolation("accommodations.csv", i, "room_type", str(exc)) from None
        rules = tuple(
            part.strip() for part in row["house_rules"].split("&") if part.strip()
        )
        accommodations.append(
            Accommodation(
                name=row["name"].strip(),
                city=city,
                price=_money("accommodations.csv", i, "price", row["price"]),
                room_type=room_type,
                house_rules=rules,
                minimum_nights=_int(
                    "accommodations.csv", i, "minimum_nights", row["minimum_nights"], 1
                ),
                maximum_occupancy=_int(
                    "accommodations.csv", i, "maximum_occupancy", row["maximum_occupancy"], 1
                ),
            )
        )

    restaurants: list[Restaurant] = []
    for i, row in enumerate(_read_rows(path, "restaurants.csv"), start=2):
        city = known("restaurants.csv", i, "city", "state", row)
        restaurants.append(
            Restaurant(
                name=row["name"].strip(),
                city=city,
                cuisine=row["cuisine"].strip(),
                avg_cost=_money("restaurants.csv", i, "avg_cost", row["avg_cost"]),
            )
        )

    attractions: list[Attraction] = []
    for i, row in enumerate(_read_rows(path, "attractions.csv"), start=2):
        city = known("attractions.csv", i, "city", "state", row)
        attractions.append(Attraction(name=row["name"].strip(), city=city))

    distances: list[DistanceRecord] = []
    for i, row in enumerate(_read_rows(path, "distances.csv"), start=2):
        origin = known("distances.csv", i, "origin_city", "origin_state", row)
        dest = known("distances.csv", i, "dest_city", "dest_state", row)
        try:
            km = float(row["km"])
        except ValueError:
            raise SchemaViolation("distances.csv", i, "km", f"not a number: {row['km']!r}") from None
        if km < 0:
            raise SchemaViolation("distances.csv", i, "km", "must be non-negative")
        distances.append(DistanceRecord(origin=origin, destination=dest, km=km))

    logger.debug(
        "loaded database from %s: %d cities, %d flights, %d accommodations",
        path,
        len(cities),
        len(flights),
        len(accommodations),
    )
    return Database(
        cities=cities,
        flights=flights,
        accommodations=accommodations,
        restaurants=restaurants,
        attractions=attractions,
        distances=distances,
    )


def _format_km(km: float) -> str:
    return str(int(km)) if km == int(km) else str(km)


def database_csv_bytes(db: Database) -> dict[str, bytes]:
    """Render the database as canonical CSV bytes, keyed by file name."""
    out: dict[str, bytes] = {}

    def render(file: str, rows: list[list[str]]) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_HEADERS[file])
        writer.writerows(rows)
        out[file] = buf.getvalue().encode("utf-8")

    render("cities.csv", [[c.name, c.state] for c in db.cities])
    render(
        "flights.csv",
        [
            [
                f.flight_number,
                f.origin.name,
                f.origin.state,
                f.destination.name,
                f.destination.state,
                f.date.isoformat(),
                format_dollars_csv(f.price),
                f.dep_time,
                f.arr_time,
            ]
            for f in db.flights
        ],
    )
    render(
        "accommodations.csv",
        [
            [
                a.name,
                a.city.name,
                a.city.state,
                format_dollars_csv(a.price),
                a.room_type,
                " & ".join(a.house_rules),
                str(a.minimum_nights),
                str(a.maximum_occupancy),
            ]
            for a in db.accommodations
        ],
    )
    render(
        "restaurants.csv",
        [
            [r.name, r.city.name, r.city.state, r.cuisine, format_dollars_csv(r.avg_cost)]
            for r in db.restaurants
        ],
    )
    render(
        "attractions.csv",
        [[t.name, t.city.name, t.city.state] for t in db.attractions],
    )
    render(
        "distances.csv",
        [
            [
                d.origin.name,
                d.origin.state,
                d.destination.name,
                d.destination.state,
                _format_km(d.km),
            ]
            for d in db.distances
        ],
    )
    return out


def save_database(db: Database, path: str | Path) -> None:
    """Write the canonical CSV files; load_database inverts this exactly."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for file, blob in database_csv_bytes(db).items():
        (path / file).write_bytes(blob)
