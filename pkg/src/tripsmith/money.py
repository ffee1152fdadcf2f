"""Currency helpers.

All money inside the engine is integer cents, so budget ledgers and cost
comparisons are exact. Dollars only appear at the edges: CSV files, JSON
artifacts, and display strings.
"""

from __future__ import annotations

import math
import re

_DOLLARS_RE = re.compile(r"^\$?\s*(-?\d+(?:\.\d{1,2})?)$")


def parse_dollars(text: str) -> int:
    """Parse a dollar amount ("474", "474.5", "$210.99") into cents."""
    m = _DOLLARS_RE.match(text.strip())
    if m is None:
        raise ValueError(f"not a dollar amount: {text!r}")
    whole, _, frac = m.group(1).partition(".")
    sign = -1 if whole.startswith("-") else 1
    cents = abs(int(whole)) * 100 + (int(frac.ljust(2, "0")) if frac else 0)
    return sign * cents


def cents_from_dollars(amount: float | int) -> int:
    """Convert a numeric dollar amount (e.g. from JSON) to cents."""
    return round(amount * 100)


def dollars(cents: int) -> float:
    """Cents to dollars as a float. Exact round trip via cents_from_dollars."""
    return cents / 100


def format_dollars(cents: int) -> str:
    """Display form used in observations, e.g. 68400 -> "$684.0"."""
    return f"${cents / 100}"


def format_dollars_csv(cents: int) -> str:
    """Canonical CSV form: no symbol, no trailing zeros ("474", "210.5")."""
    if cents % 100 == 0:
        return str(cents // 100)
    if cents % 10 == 0:
        return f"{cents // 100}.{(cents % 100) // 10}"
    return f"{cents // 100}.{cents % 100:02d}"


def ceil_to_dollars(cents: int) -> int:
    """Round cents up to the next whole dollar, returned in cents."""
    return math.ceil(cents / 100) * 100
