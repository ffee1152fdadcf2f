"""Shared fixtures: hand-built worlds and a zero-latency planner config."""

from __future__ import annotations

import pytest
from hypothesis import settings

from tripsmith import Database, SessionConfig, TravelQuery

from worlds import mini_world, mini_query, trace_world, trace_query

settings.register_profile("suite", deadline=None, max_examples=100)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def trace_db() -> Database:
    return trace_world()


@pytest.fixture()
def trace_q() -> TravelQuery:
    return trace_query()


@pytest.fixture(scope="session")
def mini_db() -> Database:
    return mini_world()


@pytest.fixture()
def mini_q() -> TravelQuery:
    return mini_query()


@pytest.fixture()
def fast_config() -> SessionConfig:
    """Deterministic zero-latency planning config for unit tests."""
    return SessionConfig(seed=0, tool_latency_ms=(0, 0))
