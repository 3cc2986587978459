"""Inner-loop driver and whole-run generation.

One inner iteration queries the oracle, fills masked positions, then runs
the strategy's editing pass against a posterior that reflects any new
commitments (a second query happens only when fills occurred).  The loop
converges when the block holds no masks and the editing pass produced no
decisions; a hard iteration cap guards against oscillation, logged as a
warning rather than an error.  Blocks advance left to right and freeze
permanently once left behind.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Sequence

from remask.engine.steps import (
    NONE,
    T2T_REPLACE,
    EditingStrategy,
    m2t_step,
    t2m_step,
    t2t_edit_step,
)
from remask.oracle.base import Oracle, OracleError, score_state
from remask.types import (
    GenerationState,
    StrategyConfig,
    TrajectoryEvent,
    ValidationError,
    events_to_jsonl,
    is_mask,
    new_generation_state,
)

logger = logging.getLogger(__name__)


@dataclass
class BlockSummary:
    block_index: int
    iterations: int
    fills: int
    edits: int
    remasks: int
    converged: bool
    warnings: list[str] = field(default_factory=list)


@dataclass
class RunResult:
    tokens: list[int]
    prompt_len: int
    events: list[TrajectoryEvent]
    block_summaries: list[BlockSummary]
    answer_tokens: list[int]

    @property
    def fills(self) -> int:
        return sum(s.fills for s in self.block_summaries)

    @property
    def edits(self) -> int:
        return sum(s.edits for s in self.block_summaries)

    @property
    def remasks(self) -> int:
        return sum(s.remasks for s in self.block_summaries)

    @property
    def inner_iters(self) -> int:
        return sum(s.iterations for s in self.block_summaries)

    @property
    def converged(self) -> bool:
        return all(s.converged for s in self.block_summaries)

    @property
    def warnings(self) -> list[str]:
        return [w for s in self.block_summaries for w in s.warnings]

    def summary(self) -> dict:
        return {
            "answer_tokens": [None if is_mask(t) else t for t in self.answer_tokens],
            "remasks": self.remasks,
            "edits": self.edits,
            "fills": self.fills,
            "inner_iters": self.inner_iters,
            "converged": self.converged,
            "blocks": len(self.block_summaries),
            "prompt_len": self.prompt_len,
            "warnings": self.warnings,
        }

    def trajectory_jsonl(self) -> str:
        return events_to_jsonl(self.events)


class GenerationAborted(RuntimeError):
    """An oracle failure stopped the run; the partial trajectory survives."""

    def __init__(self, message: str, events: list[TrajectoryEvent], state: GenerationState):
        super().__init__(message)
        self.events = events
        self.state = state


def run_block(
    state: GenerationState,
    oracle: Oracle,
    strategy: EditingStrategy,
    config: StrategyConfig,
    events: list[TrajectoryEvent],
    rng: random.Random,
) -> BlockSummary:
    """Drive the active block to convergence (or the iteration cap).

    Appends events to ``events`` in order.  Block-scoped counters are
    reset on entry and on exit.
    """
    strategy.validate_config(config)
    state.remask_counts = {}
    state.prev_prob = {}
    state.step = 0

    summary = BlockSummary(
        block_index=state.block_index, iterations=0, fills=0, edits=0, remasks=0, converged=False
    )
    frozen: set[int] = set()
    edit_counts: dict[int, int] = {}
    edit_freeze_limit = 2 * config.c_max + 2

    for _ in range(config.inner_iter_limit):
        summary.iterations += 1
        posterior = None
        fill_events: list[TrajectoryEvent] = []
        if state.has_mask_in_block():
            posterior = score_state(oracle, state)
            fill_events = m2t_step(state, posterior, config)
            events.extend(fill_events)
            summary.fills += len(fill_events)

        edit_events: list[TrajectoryEvent] = []
        if strategy.kind != NONE:
            if posterior is None or fill_events:
                posterior = score_state(oracle, state)
            if strategy.kind == T2T_REPLACE:
                edit_events = t2t_edit_step(state, posterior, config, frozen)
                for ev in edit_events:
                    edit_counts[ev.pos] = edit_counts.get(ev.pos, 0) + 1
                    if edit_counts[ev.pos] >= edit_freeze_limit:
                        frozen.add(ev.pos)
                        msg = (
                            f"position {ev.pos} reached {edit_counts[ev.pos]} edits in "
                            f"block {state.block_index}; frozen for the rest of the block"
                        )
                        summary.warnings.append(msg)
                        logger.warning(msg)
                summary.edits += len(edit_events)
            else:
                edit_events = t2m_step(state, posterior, strategy, config, rng)
                summary.remasks += len(edit_events)
            events.extend(edit_events)

        state.step += 1
        if not state.has_mask_in_block() and not edit_events:
            summary.converged = True
            break

    if not summary.converged:
        msg = (
            f"block {state.block_index} did not converge within "
            f"{config.inner_iter_limit} inner iterations"
        )
        summary.warnings.append(msg)
        logger.warning(msg)

    state.remask_counts = {}
    state.prev_prob = {}
    return summary


def generate(
    prompt: Sequence[int],
    oracle: Oracle,
    strategy: EditingStrategy,
    config: StrategyConfig,
) -> RunResult:
    """Run block generation over the whole response region.

    Fully deterministic given (oracle, strategy, config, seed).  Oracle
    errors abort the run with the partial trajectory preserved on the
    raised :class:`GenerationAborted`.
    """
    strategy.validate_config(config)
    meta = oracle.meta
    if any(t >= meta.vocab_size for t in prompt):
        raise ValidationError("prompt contains tokens outside the oracle vocabulary")
    state = new_generation_state(prompt, config)
    rng = random.Random(config.seed)
    events: list[TrajectoryEvent] = []
    summaries: list[BlockSummary] = []

    try:
        while True:
            summaries.append(run_block(state, oracle, strategy, config, events, rng))
            block_tokens = state.tokens[state.block_start : state.block_end]
            if meta.eos_id is not None and meta.eos_id in block_tokens:
                state.finished = True
            if state.finished or state.block_end >= len(state.tokens):
                break
            state.advance_block(config.block_len, len(state.tokens))
    except OracleError as exc:
        raise GenerationAborted(str(exc), events=events, state=state) from exc

    generated_end = state.block_end
    answer = state.tokens[state.prompt_len : generated_end]
    if meta.eos_id is not None and meta.eos_id in answer:
        answer = answer[: answer.index(meta.eos_id)]
    return RunResult(
        tokens=list(state.tokens),
        prompt_len=state.prompt_len,
        events=events,
        block_summaries=summaries,
        answer_tokens=answer,
    )
