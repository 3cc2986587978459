"""Standalone scenario evaluation for the scoring server.

This module deliberately re-implements the scenario semantics from the
documented JSON schema rather than importing the client-side engine
package: the two implementations meeting bit-exactly over the wire is the
interoperability guarantee the integration tests check.

Schema:

    {
      "vocab_size": int,
      "k": int,
      "eos_id": int|null,            // optional
      "pad_id": int|null,            // optional
      "rules": [
        {"pattern": [int | "M" | "*", ...],
         "outputs": {"<rel-pos>": {"<token>": prob, ...}, ...}}
      ],
      "default_dist": {"<token>": prob, ...}
    }

Matching: first rule whose pattern matches the active block's token window
wins ("M" matches a mask slot, "*" matches anything).  Positions the
matched rule does not cover, and windows no rule matches, answer with
``default_dist``.  Per position the response carries the k most probable
tokens (probability descending, ties to the lower token id) plus the
probability of the currently committed token when one was given.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

PROB_TOL = 1e-9
ANY = "*"
MASKED = "M"


class SpecError(ValueError):
    """The scenario document violates the schema."""


class RequestError(ValueError):
    """A scoring request violates the protocol contract."""


@dataclass(frozen=True)
class SpecRule:
    pattern: tuple[object, ...]
    outputs: dict[int, dict[int, float]]

    def matches(self, window: Sequence[int | None]) -> bool:
        if len(window) != len(self.pattern):
            return False
        for got, want in zip(window, self.pattern):
            if want == ANY:
                continue
            if want == MASKED:
                if got is not None:
                    return False
            elif got != want:
                return False
        return True


@dataclass(frozen=True)
class ScenarioDoc:
    vocab_size: int
    k: int
    rules: tuple[SpecRule, ...]
    default_dist: dict[int, float]
    eos_id: int | None
    pad_id: int | None

    @property
    def pattern_len(self) -> int | None:
        return len(self.rules[0].pattern) if self.rules else None


def _parse_dist(raw: Mapping, vocab_size: int, where: str) -> dict[int, float]:
    if not raw:
        raise SpecError(f"{where}: empty distribution")
    dist: dict[int, float] = {}
    for tok_str, p in raw.items():
        tok = int(tok_str)
        if tok < 0 or tok >= vocab_size:
            raise SpecError(f"{where}: token {tok} outside vocabulary")
        p = float(p)
        if not (0.0 <= p <= 1.0):
            raise SpecError(f"{where}: probability {p} out of range")
        if tok in dist:
            raise SpecError(f"{where}: duplicate token {tok}")
        dist[tok] = p
    total = sum(dist.values())
    if abs(total - 1.0) > PROB_TOL:
        raise SpecError(f"{where}: distribution sums to {total}")
    return dist


def parse_spec(doc: Mapping) -> ScenarioDoc:
    try:
        vocab_size = int(doc["vocab_size"])
        k = int(doc.get("k", 8))
        raw_rules = doc.get("rules", [])
        raw_default = doc["default_dist"]
    except KeyError as exc:
        raise SpecError(f"scenario document missing field {exc}") from None
    if vocab_size <= 0 or k < 1:
        raise SpecError("vocab_size and k must be positive")

    rules: list[SpecRule] = []
    pattern_len: int | None = None
    for idx, raw in enumerate(raw_rules):
        pattern = raw.get("pattern")
        if not isinstance(pattern, list) or not pattern:
            raise SpecError(f"rule {idx}: pattern must be a non-empty list")
        for elem in pattern:
            if elem in (ANY, MASKED):
                continue
            if not isinstance(elem, int) or isinstance(elem, bool) or not (0 <= elem < vocab_size):
                raise SpecError(f"rule {idx}: bad pattern element {elem!r}")
        if pattern_len is None:
            pattern_len = len(pattern)
        elif len(pattern) != pattern_len:
            raise SpecError(f"rule {idx}: inconsistent pattern length")
        outputs = {}
        for pos_str, dist in raw.get("outputs", {}).items():
            pos = int(pos_str)
            if pos < 0 or pos >= len(pattern):
                raise SpecError(f"rule {idx}: output position {pos} outside the block")
            outputs[pos] = _parse_dist(dist, vocab_size, f"rule {idx} pos {pos}")
        rules.append(SpecRule(pattern=tuple(pattern), outputs=outputs))

    return ScenarioDoc(
        vocab_size=vocab_size,
        k=k,
        rules=tuple(rules),
        default_dist=_parse_dist(raw_default, vocab_size, "default_dist"),
        eos_id=doc.get("eos_id"),
        pad_id=doc.get("pad_id"),
    )


def load_spec(path: str | Path) -> ScenarioDoc:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"could not parse {path}: {exc}") from exc
    return parse_spec(doc)


def top_k(dist: Mapping[int, float], k: int) -> list[tuple[int, float]]:
    return sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


def score(
    spec: ScenarioDoc,
    tokens: Sequence[int | None],
    block: tuple[int, int],
    current: Mapping[int, int],
    k: int,
) -> list[dict]:
    """Score every block position; returns wire-format position entries."""
    start, end = block
    if not (0 <= start < end):
        raise RequestError(f"invalid block range [{start}, {end})")
    if len(tokens) != end:
        raise RequestError(
            f"tokens must end exactly at the block end ({end} positions), got {len(tokens)}"
        )
    for tok in tokens:
        if tok is not None and not (0 <= tok < spec.vocab_size):
            raise RequestError(f"token {tok} outside vocabulary of size {spec.vocab_size}")
    for pos, tok in current.items():
        if not (start <= pos < end):
            raise RequestError(f"current-token position {pos} outside the block")
        if tokens[pos] is None or tokens[pos] != tok:
            raise RequestError(f"current-token entry at {pos} disagrees with the token sequence")

    window = list(tokens[start:end])
    if spec.pattern_len is not None and len(window) != spec.pattern_len:
        raise RequestError(
            f"block length {len(window)} does not match scenario pattern length {spec.pattern_len}"
        )
    matched = next((r for r in spec.rules if r.matches(window)), None)

    positions = []
    for pos in range(start, end):
        rel = pos - start
        dist = spec.default_dist
        if matched is not None and rel in matched.outputs:
            dist = matched.outputs[rel]
        entry = {
            "pos": pos,
            "top": [{"id": tok, "p": p} for tok, p in top_k(dist, k)],
            "current_p": dist.get(current[pos], 0.0) if pos in current else None,
        }
        positions.append(entry)
    return positions
