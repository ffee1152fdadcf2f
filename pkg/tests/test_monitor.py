"""Shared transactional monitor: dedup, fair lock, commits, checkpoints."""

from __future__ import annotations

import threading
import time

import pytest
from hypothesis import given, strategies as st

from tripsmith import City
from tripsmith.monitor import (
    BUDGET_EXCEEDED,
    CommitAction,
    DEFAULT_TAU,
    DUPLICATE_VENUE,
    DuplicateIndex,
    FairLock,
    GlobalState,
    KIND_ACCOMMODATION,
    KIND_ATTRACTION,
    KIND_MEAL,
    KIND_TRANSPORT,
    MODE_CONFLICT,
    MonitorTimeout,
    NO_CHECKPOINT,
    OK,
    canonicalize,
    get_remaining_nights,
    is_duplicate,
    is_final_accommodation_day,
    levenshtein,
    similarity,
)


def meal(key, cost=1000, day=1):
    return CommitAction(day=day, kind=KIND_MEAL, venue_key=key, raw_name=key,
                        cost=cost)


def attraction(key, cost=0, day=1):
    return CommitAction(day=day, kind=KIND_ATTRACTION, venue_key=key,
                        raw_name=key, cost=cost)


def room(key, cost=8000, day=1, city="weston avalon"):
    return CommitAction(day=day, kind=KIND_ACCOMMODATION, venue_key=key,
                        raw_name=key, cost=cost, city=city)


def transport(key, cost=10000, day=1, mode=None):
    return CommitAction(day=day, kind=KIND_TRANSPORT, venue_key=key,
                        raw_name=key, cost=cost, transport_mode=mode)


def _reference_levenshtein(a: str, b: str) -> int:
    prev = list(range(len(a) + 1))
    for j, cb in enumerate(b, start=1):
        cur = [j]
        for i, ca in enumerate(a, start=1):
            cur.append(min(prev[i] + 1, cur[i - 1] + 1,
                           prev[i - 1] + (ca != cb)))
        prev = cur
    return prev[len(a)]


# ---------------------------------------------------------------------------
# Canonicalization and string distance
# ---------------------------------------------------------------------------


class TestCanonicalize:
    def test_strips_case_punctuation_and_extra_spaces(self):
        assert canonicalize("  The.Ritz---Grand  HOTEL ") == "the ritz grand hotel"

    @given(st.text(max_size=40))
    def test_idempotent(self, text):
        once = canonicalize(text)
        assert canonicalize(once) == once


class TestLevenshtein:
    def test_known_distances(self):
        assert levenshtein("kitten", "sitting") == 3
        assert levenshtein("", "abc") == 3
        assert levenshtein("same", "same") == 0

    @given(st.text(alphabet="abcd ", max_size=12),
           st.text(alphabet="abcd ", max_size=12),
           st.sampled_from([None, 0, 1, 2, 4]))
    def test_matches_reference_dp_under_any_cutoff(self, a, b, cutoff):
        want = _reference_levenshtein(a, b)
        got = levenshtein(a, b, cutoff)
        if cutoff is None or want <= cutoff:
            assert got == want
        else:
            assert got > cutoff

    @given(st.text(alphabet="abcdef", max_size=15),
           st.text(alphabet="abcdef", max_size=15))
    def test_symmetric(self, a, b):
        assert levenshtein(a, b) == levenshtein(b, a)


class TestSimilarity:
    def test_identity_and_empty(self):
        assert similarity("x", "x") == 1.0
        assert similarity("", "") == 1.0
        assert similarity("", "abcd") == 0.0

    @given(st.text(alphabet="abc ", max_size=12),
           st.text(alphabet="abc ", max_size=12))
    def test_bounded(self, a, b):
        assert 0.0 <= similarity(a, b) <= 1.0


class TestIsDuplicate:
    def test_exact_match(self):
        assert is_duplicate("blue harbor cafe", "blue harbor cafe")

    def test_token_prefix_containment(self):
        assert is_duplicate("the ritz", "the ritz hotel")
        assert is_duplicate("the ritz hotel", "the ritz")

    def test_token_suffix_containment(self):
        assert is_duplicate("grand ritz hotel", "ritz hotel")

    def test_mid_word_overlap_is_not_containment(self):
        # "har" is a substring but not a whole-token prefix/suffix.
        assert not is_duplicate("harbor light", "harvest moon light show")

    def test_single_edit_on_long_names_clears_tau(self):
        a = "the golden lantern brasserie"  # 28 chars: 1 edit keeps sim >= .95
        b = "the golden lantern brasseria"
        assert is_duplicate(a, b, 0.95)

    def test_single_edit_on_short_names_fails_tau(self):
        assert not is_duplicate("cafe one", "cafe ona", 0.95)

    def test_empty_keys_never_match(self):
        assert not is_duplicate("", "anything")
        assert not is_duplicate("anything", "")


# ---------------------------------------------------------------------------
# DuplicateIndex: equivalence with pairwise checks
# ---------------------------------------------------------------------------

_WORDS = ("blue", "golden", "rustic", "silver", "amber", "harbor", "lantern",
          "orchard", "meadow", "bistro", "grill", "kitchen", "museum",
          "gallery", "the")

_name = st.lists(st.sampled_from(_WORDS), min_size=1, max_size=4).map(" ".join)
_raw = st.text(alphabet="abcdefgh .", min_size=0, max_size=25).map(canonicalize)
_keys = st.lists(st.one_of(_name, _raw), max_size=14)


class TestDuplicateIndex:
    @given(_keys, st.sampled_from([0.8, 0.95]))
    def test_collides_equals_pairwise_is_duplicate(self, keys, tau):
        index = DuplicateIndex(tau)
        members: list[str] = []
        for key in keys:
            want = any(is_duplicate(key, m, tau) for m in members)
            if key:
                assert index.collides(key) == want
            if not index.collides(key) and key:
                index.add(key)
                members.append(key)

    def test_add_is_idempotent(self):
        index = DuplicateIndex()
        index.add("blue harbor")
        index.add("blue harbor")
        assert len(index) == 1
        assert sorted(index) == ["blue harbor"]

    def test_snapshot_is_independent(self):
        index = DuplicateIndex()
        index.add("blue harbor")
        clone = index.snapshot()
        clone.add("silver meadow")
        assert len(index) == 1
        assert len(clone) == 2
        assert not index.collides("silver meadow")
        assert clone.collides("silver meadow")

    def test_empty_key_never_collides(self):
        index = DuplicateIndex()
        index.add("blue harbor")
        assert not index.collides("")


# ---------------------------------------------------------------------------
# FairLock
# ---------------------------------------------------------------------------


class TestFairLock:
    def test_grants_in_arrival_order(self):
        lock = FairLock()
        lock.acquire()
        order: list[str] = []

        def worker(tag):
            lock.acquire()
            order.append(tag)
            lock.release()

        first = threading.Thread(target=worker, args=("first",))
        second = threading.Thread(target=worker, args=("second",))
        first.start()
        while len(lock._waiters) < 1:
            time.sleep(0.001)
        second.start()
        while len(lock._waiters) < 2:
            time.sleep(0.001)
        lock.release()
        first.join()
        second.join()
        assert order == ["first", "second"]

    def test_timeout_raises(self):
        lock = FairLock(timeout_ms=40)
        lock.acquire()
        caught: list[BaseException] = []

        def blocked():
            try:
                lock.acquire()
            except MonitorTimeout as exc:
                caught.append(exc)

        t = threading.Thread(target=blocked)
        t.start()
        t.join(timeout=5)
        assert not t.is_alive()
        assert len(caught) == 1
        lock.release()

    def test_release_of_unheld_lock_raises(self):
        with pytest.raises(RuntimeError):
            FairLock().release()

    def test_context_manager(self):
        lock = FairLock()
        with lock:
            assert lock._locked
        assert not lock._locked


# ---------------------------------------------------------------------------
# GlobalState: validation, commits, and the violation priority
# ---------------------------------------------------------------------------


class TestCommit:
    def test_requires_positive_budget(self):
        with pytest.raises(ValueError):
            GlobalState(b_total=0)

    def test_accepted_commit_accrues_cost(self):
        sigma = GlobalState(b_total=10000)
        assert sigma.commit(meal("pasta forte", cost=2000)) == OK
        assert sigma.b_used == 2000
        assert sigma.remaining_budget() == 8000
        assert sigma.committed_keys(KIND_MEAL) == ["pasta forte"]

    def test_budget_boundary_is_inclusive(self):
        sigma = GlobalState(b_total=5000)
        assert sigma.commit(meal("a b c", cost=5000)) == OK
        assert sigma.b_used == 5000

    def test_budget_overrun_rejected_without_mutation(self):
        sigma = GlobalState(b_total=5000)
        assert sigma.commit(meal("a b c", cost=3000)) == OK
        before = sigma.dump()
        assert sigma.commit(meal("d e f", cost=2001)) == BUDGET_EXCEEDED
        assert sigma.dump() == before

    def test_duplicate_meal_rejected(self):
        sigma = GlobalState(b_total=100000)
        assert sigma.commit(meal("the golden lantern")) == OK
        assert sigma.commit(meal("golden lantern")) == DUPLICATE_VENUE
        assert sigma.b_used == 1000

    def test_dedup_is_per_kind(self):
        sigma = GlobalState(b_total=100000)
        assert sigma.commit(meal("riverside terrace")) == OK
        assert sigma.commit(attraction("riverside terrace")) == OK

    def test_accommodation_rebooking_allowed(self):
        sigma = GlobalState(b_total=100000)
        assert sigma.commit(room("walnut loft", day=1)) == OK
        assert sigma.commit(room("walnut loft", day=2)) == OK
        assert sigma.b_used == 16000

    def test_budget_violation_wins_over_duplicate(self):
        sigma = GlobalState(b_total=3000)
        assert sigma.commit(meal("the golden lantern", cost=2000)) == OK
        verdict = sigma.commit(meal("the golden lantern", cost=2000))
        assert verdict == BUDGET_EXCEEDED

    def test_mode_lock(self):
        sigma = GlobalState(b_total=100000)
        assert sigma.commit(transport("mode lock", cost=0, mode="flight")) == OK
        assert sigma.m_trans == "flight"
        assert sigma.commit(transport("f100", mode="flight")) == OK
        assert sigma.commit(transport("taxi day 2", mode="taxi")) == MODE_CONFLICT

    def test_modeless_transport_neither_sets_nor_conflicts(self):
        sigma = GlobalState(b_total=100000)
        assert sigma.commit(transport("f100")) == OK
        assert sigma.m_trans is None
        assert sigma.commit(transport("mode lock", cost=0, mode="taxi")) == OK
        assert sigma.commit(transport("f200")) == OK

    def test_negative_cost_raises(self):
        sigma = GlobalState(b_total=1000)
        with pytest.raises(ValueError):
            sigma.commit(meal("x y", cost=-1))

    def test_unknown_kind_raises(self):
        sigma = GlobalState(b_total=1000)
        with pytest.raises(ValueError):
            sigma.commit(CommitAction(1, "spa", "k", "k", 0))

    def test_check_is_advisory_and_pure(self):
        sigma = GlobalState(b_total=10000)
        sigma.commit(meal("pasta forte", cost=2000))
        assert sigma.check(meal("pasta forte")) == DUPLICATE_VENUE
        assert sigma.check(meal("bamboo garden", cost=9000)) == BUDGET_EXCEEDED
        assert sigma.b_used == 2000
        assert sigma.commit(meal("bamboo garden", cost=1000)) == OK

    def test_disabled_monitor_accepts_everything_and_records_nothing(self):
        sigma = GlobalState(b_total=1000, enabled=False)
        assert sigma.commit(meal("a b", cost=999999)) == OK
        assert sigma.commit(meal("a b", cost=999999)) == OK
        assert sigma.b_used == 0
        assert sigma.committed_keys(KIND_MEAL) == []


class TestView:
    def test_view_is_a_stable_snapshot(self):
        sigma = GlobalState(b_total=10000)
        sigma.commit(meal("pasta forte", cost=2000))
        view = sigma.view()
        sigma.commit(meal("bamboo garden", cost=3000))
        assert view.b_used == 2000
        assert view.remaining_budget() == 8000
        assert view.committed_keys(KIND_MEAL) == ("pasta forte",)
        assert view.is_committed(KIND_MEAL, "pasta forte")
        assert not view.is_committed(KIND_MEAL, "bamboo garden")


class TestCheckpoints:
    def test_rollback_restores_checkpoint_snapshot(self):
        sigma = GlobalState(b_total=50000)
        sigma.commit(meal("pasta forte", cost=2000))
        before = sigma.dump()
        cp = sigma.checkpoint()
        assert cp == 0
        sigma.commit(meal("bamboo garden", cost=3000))
        sigma.commit(transport("mode lock", cost=0, mode="flight"))
        assert sigma.rollback() == OK
        assert sigma.dump() == before
        assert sigma.m_trans is None

    def test_rollback_restores_dedup_behaviour(self):
        sigma = GlobalState(b_total=50000)
        sigma.checkpoint()
        sigma.commit(meal("the golden lantern"))
        sigma.rollback()
        assert sigma.commit(meal("the golden lantern")) == OK

    def test_rollback_without_checkpoint(self):
        assert GlobalState(b_total=1000).rollback() == NO_CHECKPOINT

    def test_release_checkpoint_keeps_state(self):
        sigma = GlobalState(b_total=50000)
        sigma.checkpoint()
        sigma.commit(meal("pasta forte", cost=2000))
        assert sigma.release_checkpoint() == OK
        assert sigma.b_used == 2000
        assert sigma.checkpoint_depth == 0
        assert sigma.rollback() == NO_CHECKPOINT

    def test_checkpoint_ids_are_monotone(self):
        sigma = GlobalState(b_total=1000)
        assert [sigma.checkpoint() for _ in range(3)] == [0, 1, 2]
        sigma.rollback()
        assert sigma.checkpoint() == 3
        assert sigma.checkpoint_depth == 3

    def test_nested_checkpoints_unwind_in_order(self):
        sigma = GlobalState(b_total=50000)
        sigma.commit(meal("one a", cost=100))
        outer = sigma.dump()
        sigma.checkpoint()
        sigma.commit(meal("two b", cost=200))
        inner = sigma.dump()
        inner_minus_cp = {k: v for k, v in inner.items() if k != "checkpoints"}
        sigma.checkpoint()
        sigma.commit(meal("three c", cost=300))
        sigma.rollback()
        now = {k: v for k, v in sigma.dump().items() if k != "checkpoints"}
        assert now == inner_minus_cp
        sigma.rollback()
        assert sigma.dump() == outer


class TestSerialization:
    def _populated(self) -> GlobalState:
        sigma = GlobalState(b_total=90000)
        sigma.commit(transport("mode lock", cost=0, mode="flight"))
        sigma.commit(transport("f100", cost=12000))
        sigma.commit(meal("pasta forte", cost=2000))
        sigma.checkpoint()
        sigma.commit(room("walnut loft", cost=7500, day=1))
        sigma.commit(attraction("maritime museum"))
        return sigma

    def test_dump_restore_round_trip(self):
        sigma = self._populated()
        restored = GlobalState.restore(sigma.dump())
        assert restored.dump() == sigma.dump()

    def test_restored_monitor_still_enforces_duplicates(self):
        restored = GlobalState.restore(self._populated().dump())
        assert restored.commit(meal("pasta forte")) == DUPLICATE_VENUE
        assert restored.commit(meal("pasta forte kitchen")) == DUPLICATE_VENUE

    def test_restored_monitor_continues_checkpoint_ids(self):
        restored = GlobalState.restore(self._populated().dump())
        assert restored.checkpoint_depth == 1
        assert restored.checkpoint() == 1

    def test_restored_rollback_matches_original_checkpoint(self):
        sigma = self._populated()
        restored = GlobalState.restore(sigma.dump())
        sigma.rollback()
        restored.rollback()
        assert restored.dump() == sigma.dump()


# ---------------------------------------------------------------------------
# Route-derived night arithmetic
# ---------------------------------------------------------------------------


class _Goal:
    def __init__(self, to_city):
        self.to_city = to_city


def _trip(*names):
    return [_Goal(City(n, "Avalon")) for n in names]


class TestNightArithmetic:
    def test_remaining_nights_counts_consecutive_stay(self):
        trip = _trip("A", "A", "B", "B", "Home")
        assert get_remaining_nights("A(Avalon)", 1, trip) == 2
        assert get_remaining_nights("A(Avalon)", 2, trip) == 1
        assert get_remaining_nights("B(Avalon)", 3, trip) == 2
        assert get_remaining_nights("B(Avalon)", 4, trip) == 1

    def test_final_day_contributes_no_night(self):
        trip = _trip("A", "A", "Home")
        assert get_remaining_nights("Home(Avalon)", 3, trip) == 0
        assert get_remaining_nights("A(Avalon)", 3, trip) == 0

    def test_wrong_city_is_zero(self):
        trip = _trip("A", "A", "Home")
        assert get_remaining_nights("B(Avalon)", 1, trip) == 0

    def test_final_accommodation_day(self):
        trip = _trip("A", "A", "B", "B", "Home")
        assert not is_final_accommodation_day(1, trip)
        assert is_final_accommodation_day(2, trip)  # leaves A after this night
        assert not is_final_accommodation_day(3, trip)
        assert is_final_accommodation_day(4, trip)  # last night of the trip
        assert not is_final_accommodation_day(5, trip)
        assert not is_final_accommodation_day(0, trip)
