"""CSV-backed venue world: domain types, search tools, and day-cost arithmetic."""

from .database import (
    CSV_FILES,
    Database,
    DistanceQuote,
    MissingFile,
    SchemaViolation,
    UnknownVenue,
    accommodation_search,
    attraction_search,
    canonical_name,
    city_search,
    cost_of_day,
    database_csv_bytes,
    distance_search,
    flight_search,
    ground_cost,
    load_database,
    resolve_accommodation,
    resolve_attraction,
    resolve_restaurant,
    restaurant_search,
    save_database,
)
from .types import (
    Accommodation,
    Attraction,
    City,
    ConstraintUpdate,
    DayPlan,
    DistanceRecord,
    Flight,
    HOUSE_RULE_TAGS,
    MEAL_SLOTS,
    ROOM_TYPES,
    Restaurant,
    TRANSPORT_MODES,
    TRANSPORT_RESTRICTIONS,
    TravelQuery,
    apply_update,
    validate_query,
)

__all__ = [
    "Accommodation",
    "Attraction",
    "CSV_FILES",
    "City",
    "ConstraintUpdate",
    "Database",
    "DayPlan",
    "DistanceQuote",
    "DistanceRecord",
    "Flight",
    "HOUSE_RULE_TAGS",
    "MEAL_SLOTS",
    "MissingFile",
    "ROOM_TYPES",
    "Restaurant",
    "SchemaViolation",
    "TRANSPORT_MODES",
    "TRANSPORT_RESTRICTIONS",
    "TravelQuery",
    "UnknownVenue",
    "accommodation_search",
    "apply_update",
    "attraction_search",
    "canonical_name",
    "city_search",
    "cost_of_day",
    "database_csv_bytes",
    "distance_search",
    "flight_search",
    "ground_cost",
    "load_database",
    "resolve_accommodation",
    "resolve_attraction",
    "resolve_restaurant",
    "restaurant_search",
    "save_database",
    "validate_query",
]
