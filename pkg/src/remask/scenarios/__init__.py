"""Bundled scenario fixtures.

Four hand-written regression scenarios ship with the package:

- ``fig1a`` — correction inertia: a committed token with a multimodal
  posterior that replacement editing cannot touch but low-probability
  remasking resets.
- ``drop160`` — premature replacement: an early low-confidence digit that
  replacement editing overwrites under incomplete context and remasking
  recovers once the neighbours settle.
- ``fig1c`` — delayed commitment: a three-token name that survives only
  when uncertain tokens are remasked and re-predicted jointly.
- ``fig2`` — the context signal hierarchy probed over four block states.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

BUNDLED = ("fig1a", "fig1c", "fig2", "drop160")


def scenario_path(name: str) -> Path:
    """Absolute path of a bundled scenario file."""
    if name.endswith(".json"):
        name = name[:-5]
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled scenario {name!r}; have {BUNDLED}")
    with resources.as_file(resources.files(__package__) / f"{name}.json") as p:
        return Path(p)


def bundled_scenarios() -> dict[str, Path]:
    return {name: scenario_path(name) for name in BUNDLED}
