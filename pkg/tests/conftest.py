"""Pytest fixtures: bundled scenario paths."""

from __future__ import annotations

import pytest

from remask.scenarios import scenario_path


@pytest.fixture
def fig1a_path():
    return scenario_path("fig1a")


@pytest.fixture
def fig1c_path():
    return scenario_path("fig1c")


@pytest.fixture
def fig2_path():
    return scenario_path("fig2")


@pytest.fixture
def drop160_path():
    return scenario_path("drop160")
