"""Server test fixtures.

The scenario fixture files live in the engine package; the tests here load
them as plain JSON documents (the file schema is the shared contract) and
drive the engine itself only through its CLI.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

FIXTURES = ("fig1a", "fig2", "drop160")


def bundled_fixture(name: str) -> Path:
    from remask.scenarios import scenario_path  # fixture files only; no engine APIs

    return scenario_path(name)


@pytest.fixture(params=FIXTURES)
def scenario_file(request) -> Path:
    return bundled_fixture(request.param)


@pytest.fixture
def fixture_path():
    return bundled_fixture


@pytest.fixture
def load_doc():
    def _load(name: str) -> dict:
        return json.loads(bundled_fixture(name).read_text(encoding="utf-8"))

    return _load
