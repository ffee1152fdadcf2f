"""Synchronized global state for multi-agent planning.

One monitor instance is shared by every day executor in a session. It tracks
the budget ledger, committed venues, and the locked transport mode, and it
hands out checkpoint/rollback so a failed bargaining iteration can be undone
atomically.

Concurrency model
-----------------
All mutations run inside a single exclusive critical section guarded by a
FIFO-fair lock with a 5000 ms acquisition timeout. Reads (check and the
state dump) never take that lock: they touch reference-assigned fields and
GIL-atomic container operations only, so a reader can always make progress
while writers queue. A commit therefore revalidates everything inside the
critical section; check is advisory.

Venue de-duplication combines normalized Levenshtein similarity with a
whole-token prefix/suffix containment rule, so "The Ritz" and
"The Ritz Hotel" collide even though their edit distance is large.
Duplicates are only compared within the same venue kind; accommodations are
exempt because booking the same room for consecutive nights is required, not
an error.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from typing import Any, Sequence

DEFAULT_TAU = 0.95
LOCK_TIMEOUT_MS = 5000

# Violation codes, bit-exact: these strings appear in feedback payloads.
OK = "OK"
BUDGET_EXCEEDED = "BUDGET_EXCEEDED"
DUPLICATE_VENUE = "DUPLICATE_VENUE"
MODE_CONFLICT = "MODE_CONFLICT"
NO_CHECKPOINT = "NO_CHECKPOINT"

# Commit kinds.
KIND_TRANSPORT = "transport"
KIND_MEAL = "meal"
KIND_ATTRACTION = "attraction"
KIND_ACCOMMODATION = "accommodation"
COMMIT_KINDS = (KIND_TRANSPORT, KIND_MEAL, KIND_ATTRACTION, KIND_ACCOMMODATION)

# Kinds subject to duplicate detection. Accommodations repeat by design;
# transport legs repeat whenever two days use the same mode.
DEDUP_KINDS = (KIND_MEAL, KIND_ATTRACTION)


class MonitorTimeout(RuntimeError):
    """The exclusive section could not be entered within the timeout."""


# ---------------------------------------------------------------------------
# Canonical keys and fuzzy duplicate detection
# ---------------------------------------------------------------------------


def canonicalize(name: str) -> str:
    """Canonical venue key: lowercase, strip punctuation, collapse spaces."""
    out = []
    for ch in name.lower():
        out.append(ch if ch.isalnum() or ch.isspace() else " ")
    return " ".join("".join(out).split())


def _one_edit_apart(a: str, b: str) -> bool:
    """True iff the edit distance between two distinct strings is exactly 1.

    Callers guarantee a != b and abs(len(a) - len(b)) <= 1; the common case
    (one substitution or one insertion) then reduces to a scan for the first
    mismatch plus a single slice comparison.
    """
    la, lb = len(a), len(b)
    if la == lb:
        for i in range(la):
            if a[i] != b[i]:
                return a[i + 1 :] == b[i + 1 :]
        return False
    if la > lb:
        a, b, la, lb = b, a, lb, la
    for i in range(la):
        if a[i] != b[i]:
            return a[i:] == b[i + 1 :]
    return True


def levenshtein(a: str, b: str, cutoff: int | None = None) -> int:
    """Edit distance; stops early (returning cutoff+1) when a cutoff is set."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return max(la, lb)
    if cutoff is not None and abs(la - lb) > cutoff:
        return cutoff + 1
    # Tight cutoffs dominate in practice (tau near 1): answer them without
    # running the full dynamic program.
    if cutoff == 0:
        return 1
    if cutoff == 1:
        return 1 if _one_edit_apart(a, b) else 2
    if la > lb:
        a, b, la, lb = b, a, lb, la
    prev = list(range(la + 1))
    for j in range(1, lb + 1):
        bj = b[j - 1]
        cur = [j]
        best = j
        for i in range(1, la + 1):
            cost = 0 if a[i - 1] == bj else 1
            val = min(prev[i] + 1, cur[i - 1] + 1, prev[i - 1] + cost)
            cur.append(val)
            if val < best:
                best = val
        if cutoff is not None and best > cutoff:
            return cutoff + 1
        prev = cur
    return prev[la]


def similarity(key_a: str, key_b: str) -> float:
    """Normalized Levenshtein similarity: 1 - distance / max length.

    similarity(x, x) == 1.0 for any x; a nonempty key scores 0.0 against the
    empty key.
    """
    if key_a == key_b:
        return 1.0
    longest = max(len(key_a), len(key_b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(key_a, key_b) / longest


def _token_contained(tokens_a: tuple[str, ...], tokens_b: tuple[str, ...]) -> bool:
    """True when the shorter token tuple is a prefix or suffix of the longer."""
    if not tokens_a or not tokens_b:
        return False
    if len(tokens_a) > len(tokens_b):
        tokens_a, tokens_b = tokens_b, tokens_a
    n = len(tokens_a)
    return tokens_b[:n] == tokens_a or tokens_b[-n:] == tokens_a


def is_duplicate(key_a: str, key_b: str, tau: float = DEFAULT_TAU) -> bool:
    """Whether two canonical keys name the same venue.

    True when similarity >= tau, or when one key is a whole-token
    prefix/suffix of the other (catching "the ritz" vs "the ritz hotel",
    which plain edit distance misses).
    """
    if key_a == key_b:
        return True
    if not key_a or not key_b:
        return False
    if _token_contained(tuple(key_a.split()), tuple(key_b.split())):
        return True
    longest = max(len(key_a), len(key_b))
    # Distances beyond this bound cannot clear tau; the +1 absorbs float
    # rounding so the thresholded comparison below stays exact.
    limit = int((1.0 - tau) * longest) + 1
    dist = levenshtein(key_a, key_b, cutoff=limit)
    if dist > limit:
        return False
    return 1.0 - dist / longest >= tau


class DuplicateIndex:
    """Incremental structure answering "does any member collide with key?".

    Equivalent to pairwise is_duplicate against every member, but commits
    stay cheap: exact hits and token containment are set lookups, and the
    Levenshtein scan only touches members whose length is within the edit
    budget floor((1 - tau) * max_len).
    """

    __slots__ = ("tau", "_keys", "_prefixes", "_suffixes", "_by_length")

    def __init__(self, tau: float = DEFAULT_TAU):
        self.tau = tau
        self._keys: set[str] = set()
        self._prefixes: set[tuple[str, ...]] = set()
        self._suffixes: set[tuple[str, ...]] = set()
        self._by_length: dict[int, list[str]] = {}

    def __len__(self) -> int:
        return len(self._keys)

    def __iter__(self):
        return iter(self._keys)

    def collides(self, key: str) -> bool:
        if not key:
            return False
        if key in self._keys:
            return True
        tokens = tuple(key.split())
        # An existing member extends this key, or this key extends a member.
        if tokens in self._prefixes or tokens in self._suffixes:
            return True
        for i in range(1, len(tokens)):
            if " ".join(tokens[:i]) in self._keys:
                return True
            if " ".join(tokens[i:]) in self._keys:
                return True
        # Fuzzy scan over members close enough in length to possibly clear tau.
        length = len(key)
        if not self._by_length:
            return False
        slack = 1.0 - self.tau
        lo = int(length * self.tau) - 1
        hi = int(length / self.tau) + 2 if self.tau > 0 else max(self._by_length) + 1
        for other_len in range(max(lo, 1), hi):
            bucket = self._by_length.get(other_len)
            if bucket is None:
                continue
            budget = int(slack * max(length, other_len) + 1e-9)
            if abs(length - other_len) > budget:
                continue
            for member in bucket:
                if budget > 0 and levenshtein(key, member, cutoff=budget) <= budget:
                    if similarity(key, member) >= self.tau:
                        return True
        return False

    def add(self, key: str) -> None:
        if key in self._keys:
            return
        self._keys.add(key)
        tokens = tuple(key.split())
        for i in range(1, len(tokens) + 1):
            self._prefixes.add(tokens[:i])
            self._suffixes.add(tokens[-i:])
        self._by_length.setdefault(len(key), []).append(key)

    def snapshot(self) -> "DuplicateIndex":
        clone = DuplicateIndex(self.tau)
        clone._keys = set(self._keys)
        clone._prefixes = set(self._prefixes)
        clone._suffixes = set(self._suffixes)
        clone._by_length = {k: list(v) for k, v in self._by_length.items()}
        return clone


# ---------------------------------------------------------------------------
# FIFO-fair lock
# ---------------------------------------------------------------------------


class FairLock:
    """Exclusive lock granting ownership in strict arrival order.

    Release hands the lock directly to the longest-waiting thread, so a
    steady stream of fast acquirers cannot starve anyone. Acquisition blocks
    at most timeout_ms before raising MonitorTimeout.
    """

    def __init__(self, timeout_ms: int = LOCK_TIMEOUT_MS):
        self._mutex = threading.Lock()
        self._locked = False
        self._waiters: deque[threading.Event] = deque()
        self.timeout_ms = timeout_ms

    def acquire(self) -> None:
        with self._mutex:
            if not self._locked and not self._waiters:
                self._locked = True
                return
            gate = threading.Event()
            self._waiters.append(gate)
        if gate.wait(self.timeout_ms / 1000.0):
            return  # ownership was handed over by release()
        with self._mutex:
            # Timed out; withdraw unless release() picked us in the meantime.
            if gate.is_set():
                return
            self._waiters.remove(gate)
        raise MonitorTimeout(
            f"could not enter the monitor within {self.timeout_ms} ms"
        )

    def release(self) -> None:
        with self._mutex:
            if not self._locked:
                raise RuntimeError("release of an unheld FairLock")
            if self._waiters:
                self._waiters.popleft().set()  # lock stays held, new owner
            else:
                self._locked = False

    def __enter__(self) -> "FairLock":
        self.acquire()
        return self

    def __exit__(self, *exc: Any) -> None:
        self.release()


# ---------------------------------------------------------------------------
# Commit actions and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CommitAction:
    """One proposed state change from a day executor.

    venue_key must already be canonical (see canonicalize); raw_name is kept
    for diagnostics only. cost is cents. transport_mode is required for
    transport commits; nights applies to accommodation commits.
    """

    day: int
    kind: str
    venue_key: str
    raw_name: str
    cost: int
    city: str = ""
    transport_mode: str | None = None
    nights: int = 1


class _State:
    """Mutable monitor state. Only touched while holding the fair lock,
    except for GIL-atomic reads from check/dump."""

    __slots__ = (
        "b_total",
        "b_used",
        "m_trans",
        "committed",
        "dedup",
        "committed_nights",
    )

    def __init__(self, b_total: int, tau: float):
        self.b_total = b_total
        self.b_used = 0
        self.m_trans: str | None = None
        # kind -> ordered list of (key, raw_name) in commit order
        self.committed: dict[str, list[tuple[str, str]]] = {
            kind: [] for kind in COMMIT_KINDS
        }
        self.dedup: dict[str, DuplicateIndex] = {
            kind: DuplicateIndex(tau) for kind in DEDUP_KINDS
        }
        # city -> list of (day, accommodation key)
        self.committed_nights: dict[str, list[tuple[int, str]]] = {}

    def deep_copy(self) -> "_State":
        clone = _State.__new__(_State)
        clone.b_total = self.b_total
        clone.b_used = self.b_used
        clone.m_trans = self.m_trans
        clone.committed = {k: list(v) for k, v in self.committed.items()}
        clone.dedup = {k: idx.snapshot() for k, idx in self.dedup.items()}
        clone.committed_nights = {
            k: list(v) for k, v in self.committed_nights.items()
        }
        return clone


class MonitorView:
    """Read-only snapshot of the committed state, handed to policies.

    Every executor in a scheduling batch receives the same view, so policy
    decisions are a pure function of (view, own observations) and parallel
    runs are reproducible; conflicting picks surface as commit rejections
    rather than as read races.
    """

    __slots__ = ("b_total", "b_used", "m_trans", "_committed")

    def __init__(
        self,
        b_total: int,
        b_used: int,
        m_trans: str | None,
        committed: dict[str, tuple[str, ...]],
    ):
        self.b_total = b_total
        self.b_used = b_used
        self.m_trans = m_trans
        self._committed = committed

    def remaining_budget(self) -> int:
        return self.b_total - self.b_used

    def committed_keys(self, kind: str) -> tuple[str, ...]:
        return self._committed.get(kind, ())

    def is_committed(self, kind: str, venue_key: str) -> bool:
        return venue_key in self._committed.get(kind, ())


class GlobalState:
    """The shared transactional monitor (sigma in the engine's vocabulary).

    enabled=False turns check/commit into accepting no-ops; this is the
    no-monitor ablation, where coordination errors flow through to the
    evaluator instead of being caught at commit time.
    """

    def __init__(
        self,
        b_total: int,
        tau: float = DEFAULT_TAU,
        enabled: bool = True,
        lock_timeout_ms: int = LOCK_TIMEOUT_MS,
    ):
        if b_total <= 0:
            raise ValueError("b_total must be positive cents")
        self._lock = FairLock(lock_timeout_ms)
        self._state = _State(b_total, tau)
        self._checkpoints: list[tuple[int, _State]] = []
        self._next_checkpoint_id = 0
        self.tau = tau
        self.enabled = enabled

    # -- read side ----------------------------------------------------------

    @property
    def b_total(self) -> int:
        return self._state.b_total

    @property
    def b_used(self) -> int:
        return self._state.b_used

    @property
    def m_trans(self) -> str | None:
        return self._state.m_trans

    def remaining_budget(self) -> int:
        s = self._state
        return s.b_total - s.b_used

    def committed_keys(self, kind: str) -> list[str]:
        return [key for key, _ in self._state.committed[kind]]

    def is_committed(self, kind: str, venue_key: str) -> bool:
        """Exact-key membership test (advisory, lock-free)."""
        return any(key == venue_key for key, _ in self._state.committed[kind])

    def view(self) -> MonitorView:
        """Consistent read-only snapshot taken under the lock."""
        with self._lock:
            state = self._state
            return MonitorView(
                b_total=state.b_total,
                b_used=state.b_used,
                m_trans=state.m_trans,
                committed={
                    kind: tuple(key for key, _ in pairs)
                    for kind, pairs in state.committed.items()
                },
            )

    def get_remaining_nights(self, city: str, day: int, trip: Sequence[Any]) -> int:
        """Route-derived; see the module-level function."""
        return get_remaining_nights(city, day, trip)

    def is_final_accommodation_day(self, day: int, trip: Sequence[Any]) -> bool:
        """Route-derived; see the module-level function."""
        return is_final_accommodation_day(day, trip)

    def _validate(self, state: _State, action: CommitAction) -> str:
        """Violation priority: budget, then duplicates, then mode."""
        if action.cost < 0:
            raise ValueError("commit cost must be non-negative cents")
        if action.kind not in COMMIT_KINDS:
            raise ValueError(f"unknown commit kind: {action.kind!r}")
        if state.b_used + action.cost > state.b_total:
            return BUDGET_EXCEEDED
        if action.kind in DEDUP_KINDS and state.dedup[action.kind].collides(
            action.venue_key
        ):
            return DUPLICATE_VENUE
        if action.kind == KIND_TRANSPORT and action.transport_mode is not None:
            if state.m_trans is not None and state.m_trans != action.transport_mode:
                return MODE_CONFLICT
        return OK

    def check(self, action: CommitAction) -> str:
        """Advisory validation; never mutates, never blocks on the lock."""
        if not self.enabled:
            return OK
        return self._validate(self._state, action)

    # -- write side ---------------------------------------------------------

    def commit(self, action: CommitAction) -> str:
        """Validate and apply atomically; returns OK or the violation code."""
        if not self.enabled:
            return OK
        with self._lock:
            state = self._state
            verdict = self._validate(state, action)
            if verdict != OK:
                return verdict
            state.b_used += action.cost
            state.committed[action.kind].append((action.venue_key, action.raw_name))
            if action.kind in DEDUP_KINDS:
                state.dedup[action.kind].add(action.venue_key)
            if action.kind == KIND_TRANSPORT and action.transport_mode is not None:
                state.m_trans = action.transport_mode
            if action.kind == KIND_ACCOMMODATION and action.city:
                state.committed_nights.setdefault(action.city, []).append(
                    (action.day, action.venue_key)
                )
            return OK

    def checkpoint(self) -> int:
        """Push a full snapshot; ids are monotone from 0 per monitor."""
        with self._lock:
            cp_id = self._next_checkpoint_id
            self._next_checkpoint_id += 1
            self._checkpoints.append((cp_id, self._state.deep_copy()))
            return cp_id

    def rollback(self) -> str:
        """Restore and pop the latest checkpoint; NO_CHECKPOINT when empty."""
        with self._lock:
            if not self._checkpoints:
                return NO_CHECKPOINT
            _, snapshot = self._checkpoints.pop()
            self._state = snapshot
            return OK

    def release_checkpoint(self) -> str:
        """Drop the latest checkpoint, keeping the current state.

        Used when a bargaining iteration succeeds: the snapshot taken before
        the iteration is no longer a restore target.
        """
        with self._lock:
            if not self._checkpoints:
                return NO_CHECKPOINT
            self._checkpoints.pop()
            return OK

    @property
    def checkpoint_depth(self) -> int:
        return len(self._checkpoints)

    # -- serialization ------------------------------------------------------

    @staticmethod
    def _state_to_json(state: _State) -> dict[str, Any]:
        return {
            "b_total": state.b_total,
            "b_used": state.b_used,
            "v_committed": [
                {"kind": kind, "key": key, "name": raw}
                for kind in COMMIT_KINDS
                for key, raw in state.committed[kind]
            ],
            "m_trans": state.m_trans,
            "committed_nights": {
                city: [[day, key] for day, key in nights]
                for city, nights in state.committed_nights.items()
            },
        }

    def dump(self) -> dict[str, Any]:
        """JSON-compatible dump of the full monitor, checkpoints included."""
        doc = self._state_to_json(self._state)
        doc["checkpoints"] = [
            {"id": cp_id, **self._state_to_json(snap)}
            for cp_id, snap in self._checkpoints
        ]
        return doc

    @classmethod
    def _state_from_json(cls, doc: dict[str, Any], tau: float) -> _State:
        state = _State(doc["b_total"], tau)
        state.b_used = doc["b_used"]
        state.m_trans = doc["m_trans"]
        for entry in doc["v_committed"]:
            kind, key, raw = entry["kind"], entry["key"], entry.get("name", entry["key"])
            state.committed[kind].append((key, raw))
            if kind in DEDUP_KINDS:
                state.dedup[kind].add(key)
        for city, nights in doc.get("committed_nights", {}).items():
            state.committed_nights[city] = [(day, key) for day, key in nights]
        return state

    @classmethod
    def restore(cls, doc: dict[str, Any], tau: float = DEFAULT_TAU) -> "GlobalState":
        monitor = cls(doc["b_total"], tau=tau)
        monitor._state = cls._state_from_json(doc, tau)
        monitor._checkpoints = [
            (entry["id"], cls._state_from_json(entry, tau))
            for entry in doc.get("checkpoints", [])
        ]
        monitor._next_checkpoint_id = (
            max((cp_id for cp_id, _ in monitor._checkpoints), default=-1) + 1
        )
        return monitor


# Convenient alias used through the planning modules.
Sigma = GlobalState


# ---------------------------------------------------------------------------
# Route-derived night queries
# ---------------------------------------------------------------------------
#
# These derive from the sub-goal route alone: the traveler sleeps in
# to_city(d) after every day except the last (the return flight lands home).


def _to_city_names(trip: Sequence[Any]) -> list[str]:
    return [
        goal.to_city.display() if hasattr(goal.to_city, "display") else str(goal.to_city)
        for goal in trip
    ]


def get_remaining_nights(city: str, day: int, trip: Sequence[Any]) -> int:
    """Consecutive overnight stays in city from day onward.

    day is 1-based. The final trip day contributes no night anywhere, so the
    return day always yields 0.
    """
    cities = _to_city_names(trip)
    total_days = len(cities)
    nights = 0
    for d in range(day, total_days):  # day D itself never adds a night
        if cities[d - 1] != city:
            break
        nights += 1
    return nights


def is_final_accommodation_day(day: int, trip: Sequence[Any]) -> bool:
    """True when day is the last overnight in its city before moving on."""
    cities = _to_city_names(trip)
    total_days = len(cities)
    if day < 1 or day >= total_days:  # return day: no overnight at all
        return False
    if day == total_days - 1:
        return True
    return cities[day] != cities[day - 1]
