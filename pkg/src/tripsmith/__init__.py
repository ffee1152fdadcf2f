"""Hierarchical travel planner with a transactional shared state.

A coordinator turns one natural-language-shaped query into per-day goals;
day executors plan their days in parallel against a shared budget-and-venue
ledger; failed iterations roll the ledger back to a checkpoint and bargain
for a different city allocation. A thirteen-constraint evaluator judges the
delivered itinerary, and group-normalized rewards score every trajectory.

The layers, bottom up: sandbox (venue database and search tools), monitor
(the shared ledger), coordinator, executor, policies, orchestrator,
evaluator, rewards, and generate (seeded solvable corpora).
"""

from .coordinator import (
    Coordinator,
    MetaPlan,
    MultiCityInSingleCity,
    NoFeasibleCities,
    SubGoal,
    Unresolvable,
)
from .evaluator import (
    ALL_CONSTRAINTS,
    EvalReport,
    MetricsSummary,
    Verdict,
    aggregate,
    complexity_score,
    drift_profile,
    evaluate,
    failed_report,
    tier_of,
)
from .executor import (
    BargainFeedback,
    DayContext,
    PolicyFault,
    ToolLimits,
    run_day,
)
from .generate import (
    FLEX_SHAPES,
    GeneratedCorpus,
    GenerationError,
    InfeasibleTier,
    MultiTurnScenario,
    NothingToRemove,
    flex_eligible,
    generate_bargaining_adversarial,
    generate_flex_scenarios,
    generate_instances,
)
from .monitor import (
    CommitAction,
    DEFAULT_TAU,
    GlobalState,
    MonitorTimeout,
    MonitorView,
    Sigma,
    is_duplicate,
)
from .orchestrator import (
    SessionConfig,
    SessionResult,
    benchmark,
    plan,
    revise,
    run_flex_scenario,
)
from .policies import DuplicatePronePolicy, FixedProbePolicy, GreedyPolicy
from .rewards import (
    DEFAULT_WEIGHTS,
    RewardWeights,
    RolloutBuffer,
    coordinator_objective,
    executor_objective,
    global_reward,
    grpo_advantages,
)
from .sandbox import (
    Accommodation,
    Attraction,
    City,
    ConstraintUpdate,
    Database,
    DayPlan,
    DistanceRecord,
    Flight,
    Restaurant,
    TravelQuery,
    apply_update,
    cost_of_day,
    load_database,
    save_database,
    validate_query,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_CONSTRAINTS",
    "Accommodation",
    "Attraction",
    "BargainFeedback",
    "City",
    "CommitAction",
    "ConstraintUpdate",
    "Coordinator",
    "DEFAULT_TAU",
    "DEFAULT_WEIGHTS",
    "Database",
    "DayContext",
    "DayPlan",
    "DistanceRecord",
    "DuplicatePronePolicy",
    "EvalReport",
    "FLEX_SHAPES",
    "FixedProbePolicy",
    "Flight",
    "GeneratedCorpus",
    "GenerationError",
    "GlobalState",
    "GreedyPolicy",
    "InfeasibleTier",
    "MetaPlan",
    "MetricsSummary",
    "MonitorTimeout",
    "MonitorView",
    "MultiCityInSingleCity",
    "MultiTurnScenario",
    "NoFeasibleCities",
    "NothingToRemove",
    "PolicyFault",
    "Restaurant",
    "RewardWeights",
    "RolloutBuffer",
    "SessionConfig",
    "SessionResult",
    "Sigma",
    "SubGoal",
    "ToolLimits",
    "TravelQuery",
    "Unresolvable",
    "Verdict",
    "aggregate",
    "apply_update",
    "benchmark",
    "complexity_score",
    "coordinator_objective",
    "cost_of_day",
    "drift_profile",
    "evaluate",
    "executor_objective",
    "failed_report",
    "flex_eligible",
    "generate_bargaining_adversarial",
    "generate_flex_scenarios",
    "generate_instances",
    "global_reward",
    "grpo_advantages",
    "is_duplicate",
    "load_database",
    "plan",
    "revise",
    "run_day",
    "run_flex_scenario",
    "save_database",
    "tier_of",
    "validate_query",
]
