"""Reward decomposition and group-relative advantage machinery.

The global reward scores a finished plan; role-specific objectives blend it
with an extraction score (coordinator) or a per-day completeness score
(executors). Advantages are normalized within fixed-size groups of rollouts
collected per role by a FIFO buffer, which emits a full group atomically the
moment it reaches the group size.

All reward arithmetic takes money in cents (the engine's internal unit) and
converts to dollars only where a weight is defined per dollar.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, IO, Sequence

import numpy as np

GROUP_SIZE = 4
ADVANTAGE_EPSILON = 1e-8


@dataclass(frozen=True)
class RewardWeights:
    """Scalarization constants for the reward decomposition."""

    alpha: float = 0.1  # per satisfied constraint
    beta: float = 0.001  # per dollar of budget overrun
    coord_global: float = 0.8
    coord_extract: float = 0.2
    coord_iteration_cost: float = 0.1
    exec_global: float = 0.7
    exec_local: float = 0.3
    exec_early_bonus: float = 0.15


DEFAULT_WEIGHTS = RewardWeights()


def global_reward(
    all_pass: bool,
    satisfied_constraints: int,
    b_used: int,
    b_total: int,
    weights: RewardWeights = DEFAULT_WEIGHTS,
) -> float:
    """1{all constraints pass} + alpha * satisfied - beta * dollars overrun."""
    overrun_dollars = max(0, b_used - b_total) / 100
    return (
        (1.0 if all_pass else 0.0)
        + weights.alpha * satisfied_constraints
        - weights.beta * overrun_dollars
    )


def global_reward_for_report(
    report: Any,
    b_used: int,
    b_total: int,
    weights: RewardWeights = DEFAULT_WEIGHTS,
) -> float:
    """Convenience overload for evaluator reports (13 verdicts)."""
    return global_reward(
        all_pass=report.final_pass,
        satisfied_constraints=report.satisfied_count(),
        b_used=b_used,
        b_total=b_total,
        weights=weights,
    )


def coordinator_objective(
    r_global: float,
    r_extract: float,
    n_iterations: int,
    weights: RewardWeights = DEFAULT_WEIGHTS,
) -> float:
    """0.8 * global + 0.2 * extraction - 0.1 * iterations (1-based).

    A single clean pass therefore costs 0.1; every extra bargaining round
    costs another 0.1.
    """
    if n_iterations < 1:
        raise ValueError("n_iterations is 1-based")
    return (
        weights.coord_global * r_global
        + weights.coord_extract * r_extract
        - weights.coord_iteration_cost * n_iterations
    )


def executor_objective(
    r_global: float,
    r_local: float,
    early_detection: bool,
    weights: RewardWeights = DEFAULT_WEIGHTS,
) -> float:
    """0.7 * global + 0.3 * local + 0.15 when infeasibility was flagged early."""
    return (
        weights.exec_global * r_global
        + weights.exec_local * r_local
        + (weights.exec_early_bonus if early_detection else 0.0)
    )


def extraction_score(query: Any, meta_plan: Any) -> float:
    """Fraction of query facts faithfully echoed into the meta-plan.

    Checks day count, party size, route endpoints, city count, date
    sequence, hint conservation, and restriction compliance.
    """
    goals = meta_plan.sub_goals
    checks = [
        len(goals) == query.days,
        all(g.people == query.people for g in goals),
        bool(goals) and goals[0].from_city == query.origin,
        bool(goals) and goals[-1].to_city == query.origin,
        len(meta_plan.visiting_cities) == query.visiting_city_number,
        all(
            (g.date - query.start_date).days == g.day - 1 for g in goals
        ),
        sum(g.budget_hint for g in goals) == query.budget,
        not (
            query.transport_restriction == "no flight"
            and meta_plan.transport_mode == "flight"
        )
        and not (
            query.transport_restriction == "no self-driving"
            and meta_plan.transport_mode == "self-driving"
        ),
    ]
    return sum(checks) / len(checks)


def local_reward(day_plan: Any, goal: Any, trip_length: int) -> float:
    """Fraction of the day's required items present in the final plan."""
    if day_plan is None:
        return 0.0
    required = []
    if goal.from_city != goal.to_city:
        required.append(day_plan.transportation.strip() not in ("", "-"))
    if goal.day < trip_length:
        required.append(day_plan.accommodation.strip() not in ("", "-"))
    if not required:
        return 1.0
    return sum(required) / len(required)


# ---------------------------------------------------------------------------
# GRPO advantages
# ---------------------------------------------------------------------------


def grpo_advantages(
    rewards: Sequence[float], epsilon: float = ADVANTAGE_EPSILON
) -> list[float]:
    """Group-relative advantages: (r - mean) / (population std + epsilon).

    A group of identical rewards yields exactly 0.0 for every member; this is
    short-circuited rather than trusted to float cancellation.
    """
    if len(rewards) == 0:
        return []
    arr = np.asarray(rewards, dtype=np.float64)
    if np.min(arr) == np.max(arr):
        return [0.0] * len(rewards)
    mean = arr.mean()
    std = arr.std(ddof=0)
    return ((arr - mean) / (std + epsilon)).tolist()


# ---------------------------------------------------------------------------
# FIFO rollout buffer
# ---------------------------------------------------------------------------


@dataclass
class _Partition:
    entries: list[dict[str, Any]] = field(default_factory=list)


class RolloutBuffer:
    """Role-partitioned FIFO buffer emitting complete groups atomically.

    push appends a (trajectory, reward) rollout to its role's partition; the
    moment a partition holds group_size entries it is emitted (callback and
    optional JSONL log line) and cleared inside the same critical section,
    so no observer ever sees a partition above group_size and no two groups
    interleave.
    """

    def __init__(
        self,
        group_size: int = GROUP_SIZE,
        emit: Callable[[str, list[dict[str, Any]], list[float]], None] | None = None,
        log_stream: IO[str] | None = None,
        epsilon: float = ADVANTAGE_EPSILON,
    ):
        if group_size < 1:
            raise ValueError("group_size must be >= 1")
        self.group_size = group_size
        self._emit = emit
        self._log = log_stream
        self._epsilon = epsilon
        self._lock = threading.Lock()
        self._partitions: dict[str, _Partition] = {}
        self._emitted: dict[str, int] = {}  # role -> groups emitted

    def push(self, role: str, trajectory: Any, reward: float) -> bool:
        """Add one rollout; returns True when this push emitted a group."""
        with self._lock:
            part = self._partitions.setdefault(role, _Partition())
            part.entries.append({"trajectory": trajectory, "reward": float(reward)})
            if len(part.entries) < self.group_size:
                return False
            group = part.entries
            part.entries = []
            rewards = [e["reward"] for e in group]
            advantages = grpo_advantages(rewards, self._epsilon)
            self._emitted[role] = self._emitted.get(role, 0) + 1
            if self._log is not None:
                self._log.write(
                    json.dumps(
                        {"role": role, "group": rewards, "advantages": advantages},
                        sort_keys=True,
                    )
                    + "\n"
                )
            if self._emit is not None:
                self._emit(role, group, advantages)
            return True

    def occupancy(self, role: str) -> int:
        with self._lock:
            part = self._partitions.get(role)
            return len(part.entries) if part else 0

    def total_occupancy(self) -> int:
        with self._lock:
            return sum(len(p.entries) for p in self._partitions.values())

    def groups_emitted(self, role: str | None = None) -> int:
        with self._lock:
            if role is not None:
                return self._emitted.get(role, 0)
            return sum(self._emitted.values())

    def drain(self) -> dict[str, list[dict[str, Any]]]:
        """Remove and return incomplete remainders (no advantages computed)."""
        with self._lock:
            leftovers = {
                role: part.entries
                for role, part in self._partitions.items()
                if part.entries
            }
            self._partitions = {}
            return leftovers
