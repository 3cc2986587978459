"""Scripted (tabular) oracles: hand-auditable scenario replay.

A scenario file is a JSON document:

    {
      "vocab_size": 16,
      "k": 8,
      "eos_id": 15,                  // optional
      "pad_id": null,                // optional
      "rules": [
        {"pattern": [10, "M", "*"],  // exact token / mask / wildcard
         "outputs": {"1": {"8": 0.72, "6": 0.1, ...}}}
      ],
      "default_dist": {"0": 1.0},
      "task": { ... }                // optional runner section, ignored here
    }

Rules are matched first-to-last against the token window of the active
block; ``outputs`` maps block-relative positions to full distributions over
token ids.  Positions not covered by the matching rule (and states no rule
matches) fall back to ``default_dist``.  Identical files yield identical
oracles, and scoring is bit-exact deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from remask.oracle.base import OracleProtocolError, assert_visible_in_bounds, check_current_tokens
from remask.types import (
    PROB_TOL,
    BlockPosterior,
    OracleMeta,
    PosteriorEntry,
    ValidationError,
    is_mask,
)

ANY = "*"
MASK_PATTERN = "M"


class ScenarioError(ValidationError):
    """A scenario document violates the schema or its invariants."""


@dataclass(frozen=True)
class Rule:
    """One context-pattern rule: a per-position matcher over the block
    window and the distributions it prescribes."""

    pattern: tuple[object, ...]
    outputs: dict[int, dict[int, float]]

    def matches(self, window: Sequence[int]) -> bool:
        if len(window) != len(self.pattern):
            return False
        for got, want in zip(window, self.pattern):
            if want == ANY:
                continue
            if want == MASK_PATTERN:
                if not is_mask(got):
                    return False
            elif got != want:
                return False
        return True


@dataclass(frozen=True)
class ScenarioSpec:
    vocab_size: int
    k: int
    rules: tuple[Rule, ...]
    default_dist: dict[int, float]
    eos_id: int | None = None
    pad_id: int | None = None
    task: dict = field(default_factory=dict)

    @property
    def pattern_len(self) -> int | None:
        return len(self.rules[0].pattern) if self.rules else None


def _check_dist(dist: Mapping[int, float], vocab_size: int, where: str) -> dict[int, float]:
    if not dist:
        raise ScenarioError(f"{where}: empty distribution")
    out: dict[int, float] = {}
    for tok, p in dist.items():
        tok = int(tok)
        if tok < 0 or tok >= vocab_size:
            raise ScenarioError(f"{where}: token {tok} outside vocabulary of size {vocab_size}")
        if not (0.0 <= float(p) <= 1.0):
            raise ScenarioError(f"{where}: probability {p} out of range")
        if tok in out:
            raise ScenarioError(f"{where}: duplicate token {tok}")
        out[tok] = float(p)
    total = sum(out.values())
    if abs(total - 1.0) > PROB_TOL:
        raise ScenarioError(f"{where}: distribution sums to {total}, expected 1")
    return out


def parse_scenario(doc: Mapping) -> ScenarioSpec:
    """Validate a scenario document and build the spec."""
    try:
        vocab_size = int(doc["vocab_size"])
        k = int(doc.get("k", 8))
        raw_rules = doc.get("rules", [])
        raw_default = doc["default_dist"]
    except KeyError as exc:
        raise ScenarioError(f"scenario document missing field {exc}") from None
    if vocab_size <= 0:
        raise ScenarioError("vocab_size must be positive")
    if k < 1:
        raise ScenarioError("k must be >= 1")

    rules: list[Rule] = []
    pattern_len: int | None = None
    for idx, raw in enumerate(raw_rules):
        pattern = raw.get("pattern")
        if not isinstance(pattern, list) or not pattern:
            raise ScenarioError(f"rule {idx}: pattern must be a non-empty list")
        for elem in pattern:
            if elem in (ANY, MASK_PATTERN):
                continue
            if not isinstance(elem, int) or isinstance(elem, bool) or elem < 0 or elem >= vocab_size:
                raise ScenarioError(f"rule {idx}: bad pattern element {elem!r}")
        if pattern_len is None:
            pattern_len = len(pattern)
        elif len(pattern) != pattern_len:
            raise ScenarioError(
                f"rule {idx}: pattern length {len(pattern)} does not match block length {pattern_len}"
            )
        outputs: dict[int, dict[int, float]] = {}
        for pos_str, dist in raw.get("outputs", {}).items():
            pos = int(pos_str)
            if pos < 0 or pos >= len(pattern):
                raise ScenarioError(f"rule {idx}: output position {pos} outside the block")
            outputs[pos] = _check_dist(dist, vocab_size, f"rule {idx} position {pos}")
        rules.append(Rule(pattern=tuple(pattern), outputs=outputs))

    default_dist = _check_dist(raw_default, vocab_size, "default_dist")
    task = doc.get("task", {})
    declared_block_len = task.get("config", {}).get("block_len") if isinstance(task, dict) else None
    if declared_block_len is not None and pattern_len is not None and pattern_len != declared_block_len:
        raise ScenarioError(
            f"pattern length {pattern_len} does not match declared block length {declared_block_len}"
        )

    eos_id = doc.get("eos_id")
    pad_id = doc.get("pad_id")
    spec = ScenarioSpec(
        vocab_size=vocab_size,
        k=k,
        rules=tuple(rules),
        default_dist=default_dist,
        eos_id=None if eos_id is None else int(eos_id),
        pad_id=None if pad_id is None else int(pad_id),
        task=dict(task) if isinstance(task, dict) else {},
    )
    # OracleMeta re-checks special-token ids against the vocabulary.
    OracleMeta(vocab_size=vocab_size, eos_id=spec.eos_id, pad_id=spec.pad_id, k=k)
    return spec


def top_k_from_dist(dist: Mapping[int, float], k: int) -> tuple[tuple[int, float], ...]:
    """Deterministic top-k: probability descending, ties by lower token id."""
    ranked = sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(ranked[:k])


class TabularOracle:
    """Deterministic oracle replaying a :class:`ScenarioSpec`."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self._meta = OracleMeta(
            vocab_size=spec.vocab_size, eos_id=spec.eos_id, pad_id=spec.pad_id, k=spec.k
        )

    @property
    def meta(self) -> OracleMeta:
        return self._meta

    def score_block(
        self,
        visible: Sequence[int],
        block: tuple[int, int],
        current: Mapping[int, int],
    ) -> BlockPosterior:
        assert_visible_in_bounds(visible, block)
        check_current_tokens(visible, block, current)
        start, end = block
        window = list(visible[start:end])
        if self.spec.pattern_len is not None and len(window) != self.spec.pattern_len:
            raise OracleProtocolError(
                f"block length {len(window)} does not match scenario pattern length {self.spec.pattern_len}"
            )
        matched = next((r for r in self.spec.rules if r.matches(window)), None)
        entries: dict[int, PosteriorEntry] = {}
        for pos in range(start, end):
            rel = pos - start
            dist = self.spec.default_dist
            if matched is not None and rel in matched.outputs:
                dist = matched.outputs[rel]
            current_p = None
            if pos in current:
                current_p = dist.get(current[pos], 0.0)
            entries[pos] = PosteriorEntry(top=top_k_from_dist(dist, self.spec.k), current_p=current_p)
        return BlockPosterior(block_start=start, block_end=end, entries=entries, k=self.spec.k)


def load_scenario(path: str | Path) -> TabularOracle:
    """Load a scenario file into a deterministic oracle.

    Identical files yield identical oracles; all schema violations raise
    :class:`ScenarioError` at load time.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"could not parse scenario file {path}: {exc}") from exc
    return TabularOracle(parse_scenario(doc))
