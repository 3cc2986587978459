"""Shared domain types for block-diffusion decoding.

Everything downstream (oracles, the decoding engine, analysis, the sweep
harness) builds on the types in this module: token conventions, the strategy
configuration, the evolving generation state, per-block posteriors returned
by oracles, and the trajectory events the engine records.

Token convention: tokens are plain vocabulary ids (non-negative ints).  The
mask slot is represented by the sentinel ``MASK`` (-1), which is never a
vocabulary id.  At every external boundary (trajectory JSON-lines, the wire
protocol, scenario files) a mask serializes as ``null`` / ``"M"``, so the
sentinel never leaks outside the process.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

MASK: int = -1

FILL = "fill"
EDIT = "edit"
REMASK = "remask"
PHASES = (FILL, EDIT, REMASK)

PROB_TOL = 1e-9


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class ContractViolationError(RuntimeError):
    """Raised when a component breaks an internal contract (e.g. an oracle
    response missing a position the engine asked about)."""


def is_mask(token: int) -> bool:
    return token == MASK


@dataclass(frozen=True)
class OracleMeta:
    """Vocabulary facts declared by the active oracle.

    The engine never assumes a vocabulary size of its own; scripted oracles
    use tiny vocabularies while remote oracles expose real tokenizers.
    ``eos_id`` / ``pad_id`` are optional: oracles without a stop token simply
    generate until the length budget is exhausted.
    """

    vocab_size: int
    eos_id: int | None = None
    pad_id: int | None = None
    k: int = 8

    def __post_init__(self) -> None:
        if self.vocab_size <= 0:
            raise ValidationError("vocab_size must be positive")
        special = [t for t in (self.eos_id, self.pad_id) if t is not None]
        if any(t < 0 or t >= self.vocab_size for t in special):
            raise ValidationError("special token ids must lie inside the vocabulary")
        if len(special) != len(set(special)):
            raise ValidationError("special token ids must be pairwise distinct")
        if self.k < 1:
            raise ValidationError("top-k width must be >= 1")


@dataclass
class StrategyConfig:
    """Thresholds, safety caps, and budgets for one generation run.

    All probability thresholds live here so that editing strategies are
    parameterised by a single object.  Defaults follow the engine's
    standard operating point: fill threshold 0.7, replace threshold 0.5,
    low-probability remask threshold 0.3, per-position remask budget 1,
    per-step remask ratio cap 0.25, block length 32.
    """

    tau_m2t: float = 0.7
    tau_t2t: float = 0.5
    tau_lp: float = 0.3
    tau_tr: float = 0.5
    tau_ld: float = 0.2
    sigma: float = 0.1
    c_max: int = 1
    rho_max: float = 0.25
    n_transfer: int = 1
    block_len: int = 32
    max_new_tokens: int = 64
    max_inner_iters: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("tau_m2t", "tau_t2t", "tau_lp", "tau_tr", "tau_ld", "sigma"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if self.c_max < 0:
            raise ValidationError("c_max must be non-negative")
        if not (0.0 < self.rho_max <= 1.0):
            raise ValidationError("rho_max must lie in (0, 1]")
        if self.n_transfer < 1:
            raise ValidationError("n_transfer must be >= 1")
        if self.block_len < 1:
            raise ValidationError("block_len must be >= 1")
        if self.max_new_tokens < 1:
            raise ValidationError("max_new_tokens must be >= 1")
        if self.max_inner_iters is not None and self.max_inner_iters < 1:
            raise ValidationError("max_inner_iters must be >= 1")

    @property
    def inner_iter_limit(self) -> int:
        # Hard cap on the inner loop; pure token-to-token editing can
        # oscillate, so an unbounded loop is not acceptable in a library.
        if self.max_inner_iters is not None:
            return self.max_inner_iters
        return 4 * self.block_len

    def with_overrides(self, **kwargs) -> "StrategyConfig":
        return replace(self, **kwargs)


@dataclass
class GenerationState:
    """The evolving token sequence of one generation run.

    ``tokens`` holds the prompt (frozen) followed by the response region,
    where unfilled slots are ``MASK``.  The active block is
    ``[block_start, block_end)``.  ``remask_counts`` and ``prev_prob`` are
    block-scoped bookkeeping: they reset whenever the cursor advances.
    ``step`` counts inner iterations within the active block.
    """

    tokens: list[int]
    prompt_len: int
    block_start: int
    block_end: int
    remask_counts: dict[int, int] = field(default_factory=dict)
    prev_prob: dict[int, float] = field(default_factory=dict)
    step: int = 0
    block_index: int = 0
    finished: bool = False

    def block_positions(self) -> range:
        return range(self.block_start, self.block_end)

    def masked_positions(self) -> list[int]:
        return [i for i in self.block_positions() if is_mask(self.tokens[i])]

    def has_mask_in_block(self) -> bool:
        return any(is_mask(self.tokens[i]) for i in self.block_positions())

    def advance_block(self, block_len: int, total_len: int) -> None:
        """Move the cursor to the next block and reset block-scoped counters."""
        self.block_start = self.block_end
        self.block_end = min(self.block_end + block_len, total_len)
        self.remask_counts = {}
        self.prev_prob = {}
        self.step = 0
        self.block_index += 1


def new_generation_state(prompt: Sequence[int], config: StrategyConfig) -> GenerationState:
    """Build the initial state: prompt followed by ``max_new_tokens`` mask slots.

    The cursor starts at the first response block.  Prompt positions are
    never masked and are never modified afterwards.
    """
    prompt = list(prompt)
    if not prompt:
        raise ValidationError("prompt must be non-empty")
    if any(is_mask(t) for t in prompt):
        raise ValidationError("prompt must not contain mask slots")
    if any(t < 0 for t in prompt):
        raise ValidationError("prompt tokens must be non-negative vocabulary ids")
    tokens = prompt + [MASK] * config.max_new_tokens
    block_start = len(prompt)
    block_end = min(block_start + config.block_len, len(tokens))
    return GenerationState(
        tokens=tokens,
        prompt_len=len(prompt),
        block_start=block_start,
        block_end=block_end,
    )


def editable_positions(state: GenerationState) -> set[int]:
    """Committed, non-prompt positions within the active block.

    Prompt positions that fall inside a block stay frozen; mask slots are
    not editable until filled.
    """
    return {
        i
        for i in state.block_positions()
        if i >= state.prompt_len and not is_mask(state.tokens[i])
    }


@dataclass(frozen=True)
class PosteriorEntry:
    """Oracle output for a single position: top-k candidates plus the
    probability of the currently committed token (committed positions only)."""

    top: tuple[tuple[int, float], ...]
    current_p: float | None = None

    def top1(self) -> tuple[int, float]:
        if not self.top:
            raise ContractViolationError("posterior entry has no candidates")
        return self.top[0]


@dataclass(frozen=True)
class BlockPosterior:
    """One oracle response for the active block."""

    block_start: int
    block_end: int
    entries: Mapping[int, PosteriorEntry]
    k: int

    def entry(self, pos: int) -> PosteriorEntry:
        try:
            return self.entries[pos]
        except KeyError:
            raise ContractViolationError(f"posterior missing position {pos}") from None

    def current_p(self, pos: int) -> float:
        e = self.entry(pos)
        if e.current_p is None:
            raise ContractViolationError(f"posterior has no committed-token probability at position {pos}")
        return e.current_p

    def validate(self) -> None:
        for pos, e in self.entries.items():
            if not (self.block_start <= pos < self.block_end):
                raise ContractViolationError(f"posterior position {pos} outside block")
            probs = [p for _, p in e.top]
            if any(p < 0.0 or p > 1.0 for p in probs):
                raise ContractViolationError(f"probability out of range at position {pos}")
            if sum(probs) > 1.0 + PROB_TOL:
                raise ContractViolationError(f"probabilities exceed 1 at position {pos}")
            if any(probs[i] < probs[i + 1] for i in range(len(probs) - 1)):
                raise ContractViolationError(f"top candidates not sorted at position {pos}")
            if e.current_p is not None and not (0.0 <= e.current_p <= 1.0):
                raise ContractViolationError(f"committed-token probability out of range at position {pos}")


@dataclass(frozen=True)
class TrajectoryEvent:
    """A single fill, edit, or remask decision.

    ``step`` follows the per-step trajectory-table convention: fill events
    carry the inner-iteration index they happened in, while edit/remask
    events are stamped one tick later (they transform the state that fill
    pass produced).  ``prob`` is the probability that drove the decision:
    top-1 probability for fills and edits, the detector's driving signal
    for remasks.
    """

    step: int
    phase: str
    pos: int
    old: int
    new: int
    prob: float
    detector: str | None
    block_index: int

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ValidationError(f"unknown phase {self.phase!r}")
        if self.phase == FILL and not (is_mask(self.old) and not is_mask(self.new)):
            raise ValidationError("fill events must turn a mask into a token")
        if self.phase == REMASK and not (not is_mask(self.old) and is_mask(self.new)):
            raise ValidationError("remask events must turn a token into a mask")
        if self.phase == EDIT and (is_mask(self.old) or is_mask(self.new) or self.old == self.new):
            raise ValidationError("edit events must swap one committed token for another")

    def to_json_obj(self) -> dict:
        return {
            "step": self.step,
            "phase": self.phase,
            "pos": self.pos,
            "old": None if is_mask(self.old) else self.old,
            "new": None if is_mask(self.new) else self.new,
            "prob": self.prob,
            "detector": self.detector,
            "block_index": self.block_index,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "TrajectoryEvent":
        return cls(
            step=obj["step"],
            phase=obj["phase"],
            pos=obj["pos"],
            old=MASK if obj["old"] is None else obj["old"],
            new=MASK if obj["new"] is None else obj["new"],
            prob=obj["prob"],
            detector=obj.get("detector"),
            block_index=obj["block_index"],
        )


def events_to_jsonl(events: Iterable[TrajectoryEvent]) -> str:
    """Canonical JSON-lines serialization: one event per line, fixed field
    order, compact separators.  Identical event streams produce identical
    bytes, which the determinism checks rely on."""
    lines = [json.dumps(e.to_json_obj(), separators=(",", ":")) for e in events]
    return "".join(line + "\n" for line in lines)


def events_from_jsonl(text: str) -> list[TrajectoryEvent]:
    events = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        events.append(TrajectoryEvent.from_json_obj(json.loads(line)))
    return events


def logistic(x: float) -> float:
    # Overflow-safe; exp(-710) underflows to 0.0 which is fine here.
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)
