"""Domain types for the travel sandbox.

Venue records are immutable; a loaded database is never mutated by planning.
String forms used in day plans ("Name, City(State)", "from A(S1) to B(S2)")
live here next to the types so every module renders and parses them the same
way.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date as Date
from typing import Any

from ..money import cents_from_dollars, dollars

# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

ROOM_TYPES = frozenset({"entire room", "private room", "shared room"})

# Requirements may also ask for the negation of shared occupancy.
ROOM_TYPE_REQUESTS = ROOM_TYPES | {"not shared room"}

# CSV sources spell room types a few ways; canonicalize at load time.
_ROOM_TYPE_ALIASES = {
    "entire home/apt": "entire room",
    "entire home": "entire room",
    "entire room": "entire room",
    "private room": "private room",
    "shared room": "shared room",
}

HOUSE_RULE_TAGS = frozenset(
    {"parties", "smoking", "children under 10", "pets", "visitors"}
)

TRANSPORT_MODES = ("flight", "taxi", "self-driving")

TRANSPORT_RESTRICTIONS = frozenset({"no flight", "no self-driving"})

MEAL_SLOTS = ("breakfast", "lunch", "dinner")

# Per-day roles in a meta-plan.
ROLE_DEPARTURE = "DEPARTURE"
ROLE_STAY = "STAY"
ROLE_TRANSIT = "TRANSIT"
ROLE_RETURN = "RETURN"
ROLES = (ROLE_DEPARTURE, ROLE_STAY, ROLE_TRANSIT, ROLE_RETURN)

EMPTY_FIELD = "-"


def normalize_room_type(raw: str) -> str:
    key = raw.strip().lower()
    if key not in _ROOM_TYPE_ALIASES:
        raise ValueError(f"unknown room type: {raw!r}")
    return _ROOM_TYPE_ALIASES[key]


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class City:
    name: str
    state: str

    def display(self) -> str:
        return f"{self.name}({self.state})"


@dataclass(frozen=True)
class Flight:
    flight_number: str
    origin: City
    destination: City
    date: Date
    price: int  # cents
    dep_time: str  # "HH:MM"
    arr_time: str


@dataclass(frozen=True)
class Accommodation:
    name: str
    city: City
    price: int  # cents per night
    room_type: str
    house_rules: tuple[str, ...]  # e.g. ("No smoking", "No parties")
    minimum_nights: int
    maximum_occupancy: int


@dataclass(frozen=True)
class Restaurant:
    name: str
    city: City
    cuisine: str
    avg_cost: int  # cents per person


@dataclass(frozen=True)
class Attraction:
    name: str
    city: City


@dataclass(frozen=True)
class DistanceRecord:
    origin: City
    destination: City
    km: float


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


@dataclass
class TravelQuery:
    """One planning request.

    Bounds like days in {3, 5, 7} are enforced by the instance generator and
    the CLI loader (see validate_query), not at construction time, so the
    evaluator can be exercised on tiny synthetic itineraries.
    """

    query_id: str
    origin: City
    destination: str  # state name, or a city name for single-city trips
    start_date: Date
    days: int
    visiting_city_number: int
    people: int
    budget: int  # cents
    house_rule: str | None = None
    cuisines: frozenset[str] = frozenset()
    room_type: str | None = None
    transport_restriction: str | None = None

    def local_constraint_fields(self) -> list[str]:
        """Names of populated local-constraint fields, in canonical order."""
        present = []
        if self.cuisines:
            present.append("cuisines")
        if self.room_type:
            present.append("room_type")
        if self.house_rule:
            present.append("house_rule")
        if self.transport_restriction:
            present.append("transport_restriction")
        return present

    def to_json(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "origin": self.origin.display(),
            "destination": self.destination,
            "start_date": self.start_date.isoformat(),
            "days": self.days,
            "visiting_city_number": self.visiting_city_number,
            "people": self.people,
            "budget": dollars(self.budget),
            "house_rule": self.house_rule,
            "cuisines": sorted(self.cuisines),
            "room_type": self.room_type,
            "transport_restriction": self.transport_restriction,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "TravelQuery":
        return cls(
            query_id=obj["query_id"],
            origin=parse_city_display(obj["origin"]),
            destination=obj["destination"],
            start_date=Date.fromisoformat(obj["start_date"]),
            days=int(obj["days"]),
            visiting_city_number=int(obj["visiting_city_number"]),
            people=int(obj["people"]),
            budget=cents_from_dollars(obj["budget"]),
            house_rule=obj.get("house_rule"),
            cuisines=frozenset(obj.get("cuisines") or ()),
            room_type=obj.get("room_type"),
            transport_restriction=obj.get("transport_restriction"),
        )


def validate_query(query: TravelQuery) -> None:
    """Raise ValueError when a query is outside the supported envelope."""
    if query.days not in (3, 5, 7):
        raise ValueError(f"{query.query_id}: days must be 3, 5 or 7")
    if not 1 <= query.visiting_city_number <= 3:
        raise ValueError(f"{query.query_id}: visiting_city_number must be 1..3")
    if query.visiting_city_number > query.days - 1:
        raise ValueError(
            f"{query.query_id}: {query.visiting_city_number} cities do not fit "
            f"in {query.days} days"
        )
    if query.people < 1:
        raise ValueError(f"{query.query_id}: people must be >= 1")
    if query.budget <= 0:
        raise ValueError(f"{query.query_id}: budget must be positive")
    if query.room_type is not None and query.room_type not in ROOM_TYPE_REQUESTS:
        raise ValueError(f"{query.query_id}: bad room_type {query.room_type!r}")
    if (
        query.transport_restriction is not None
        and query.transport_restriction not in TRANSPORT_RESTRICTIONS
    ):
        raise ValueError(
            f"{query.query_id}: bad transport_restriction "
            f"{query.transport_restriction!r}"
        )


# ---------------------------------------------------------------------------
# Follow-up constraint updates (multi-turn scenarios)
# ---------------------------------------------------------------------------

UPDATABLE_FIELDS = (
    "budget",
    "people",
    "cuisines",
    "room_type",
    "house_rule",
    "transport_restriction",
)


@dataclass(frozen=True)
class ConstraintUpdate:
    """One follow-up turn: attach or change a single query field."""

    field: str
    value: Any

    def __post_init__(self) -> None:
        if self.field not in UPDATABLE_FIELDS:
            raise ValueError(f"cannot update field {self.field!r}")

    def to_json(self) -> dict[str, Any]:
        value = self.value
        if self.field == "budget":
            value = dollars(value)
        elif self.field == "cuisines":
            value = sorted(value)
        return {"field": self.field, "value": value}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ConstraintUpdate":
        value = obj["value"]
        if obj["field"] == "budget":
            value = cents_from_dollars(value)
        elif obj["field"] == "cuisines":
            value = frozenset(value)
        return cls(field=obj["field"], value=value)


def apply_update(query: TravelQuery, update: ConstraintUpdate) -> TravelQuery:
    """A new query with one constraint attached/changed; the rest is shared."""
    from dataclasses import replace

    return replace(query, **{update.field: update.value})


# ---------------------------------------------------------------------------
# Day plans
# ---------------------------------------------------------------------------


@dataclass
class DayPlan:
    """One itinerary day in the exchange format shared by all modules.

    Venue fields hold display strings ("Name, City(State)" or "-");
    attractions is a semicolon-joined list with a trailing semicolon.
    """

    day: int
    current_city: str  # "City(State)" or "from A(S1) to B(S2)"
    transportation: str  # flight number, "Taxi", "Self-driving", or "-"
    breakfast: str
    lunch: str
    dinner: str
    attractions: str
    accommodation: str
    cost: int  # cents

    def meals(self) -> list[str]:
        return [self.breakfast, self.lunch, self.dinner]

    def attraction_list(self) -> list[str]:
        return split_attractions(self.attractions)

    def to_json(self) -> dict[str, Any]:
        return {
            "day": self.day,
            "current_city": self.current_city,
            "transportation": self.transportation,
            "breakfast": self.breakfast,
            "lunch": self.lunch,
            "dinner": self.dinner,
            "attractions": self.attractions,
            "accommodation": self.accommodation,
            "cost": dollars(self.cost),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "DayPlan":
        return cls(
            day=int(obj["day"]),
            current_city=obj["current_city"],
            transportation=obj["transportation"],
            breakfast=obj["breakfast"],
            lunch=obj["lunch"],
            dinner=obj["dinner"],
            attractions=obj["attractions"],
            accommodation=obj["accommodation"],
            cost=cents_from_dollars(obj["cost"]),
        )


# ---------------------------------------------------------------------------
# String forms
# ---------------------------------------------------------------------------

_CITY_DISPLAY_RE = re.compile(r"^(?P<name>[^()]+)\((?P<state>[^()]+)\)$")
_ROUTE_RE = re.compile(r"^from (?P<src>.+?\([^()]+\)) to (?P<dst>.+?\([^()]+\))$")
_VENUE_RE = re.compile(r"^(?P<name>.+), (?P<city>[^,()]+\([^()]+\))$")


def parse_city_display(text: str) -> City:
    m = _CITY_DISPLAY_RE.match(text.strip())
    if m is None:
        raise ValueError(f"not a City(State) string: {text!r}")
    return City(m.group("name").strip(), m.group("state").strip())


def format_route(origin: City, destination: City) -> str:
    return f"from {origin.display()} to {destination.display()}"


def parse_current_city(text: str) -> tuple[City | None, City]:
    """Parse a current_city field.

    Returns (from_city, to_city) for travel days and (None, city) for days
    spent in a single city.
    """
    m = _ROUTE_RE.match(text.strip())
    if m is not None:
        return parse_city_display(m.group("src")), parse_city_display(m.group("dst"))
    return None, parse_city_display(text)


def format_venue(name: str, city: City) -> str:
    return f"{name}, {city.display()}"


def parse_venue(text: str) -> tuple[str, City]:
    m = _VENUE_RE.match(text.strip())
    if m is None:
        raise ValueError(f"not a 'Name, City(State)' string: {text!r}")
    return m.group("name"), parse_city_display(m.group("city"))


def join_attractions(entries: list[str]) -> str:
    """Render attraction venue strings; trailing semicolon, "-" when empty."""
    if not entries:
        return EMPTY_FIELD
    return ";".join(entries) + ";"


def split_attractions(text: str) -> list[str]:
    if text.strip() in ("", EMPTY_FIELD):
        return []
    return [part.strip() for part in text.split(";") if part.strip()]
