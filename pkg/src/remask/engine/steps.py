"""Step primitives of the decoding loop.

Two phases alternate inside a block.  The fill phase (mask-to-token)
commits the argmax at every masked position whose confidence clears
``tau_m2t``, with a forced-progress budget so the loop can never stall on
an under-confident block.  The editing phase then re-examines committed
tokens and either overwrites them (token-to-token replacement) or resets
them to the mask slot (token-to-mask remasking) under one of four
detectors.  Remasking is bounded by a per-position budget ``c_max`` and a
per-step ratio cap ``rho_max``.

All decisions within one step are computed against a single posterior
snapshot and applied afterwards; no decision observes another decision
from the same step.  Thresholds are strict: boundary values never trigger.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping

from remask.types import (
    EDIT,
    FILL,
    MASK,
    REMASK,
    BlockPosterior,
    GenerationState,
    StrategyConfig,
    TrajectoryEvent,
    ValidationError,
    editable_positions,
)

T2T_REPLACE = "t2t_replace"
T2M_LOWPROB = "t2m_lowprob"
T2M_T2TTRIGGER = "t2m_t2ttrigger"
T2M_LOGITDIFF = "t2m_logitdiff"
RANDOM_REMASK = "random_remask"
NONE = "none"

STRATEGY_KINDS = (T2T_REPLACE, T2M_LOWPROB, T2M_T2TTRIGGER, T2M_LOGITDIFF, RANDOM_REMASK, NONE)

_DETECTOR_NAMES = {
    T2M_LOWPROB: "lowprob",
    T2M_T2TTRIGGER: "t2t_trigger",
    T2M_LOGITDIFF: "logitdiff",
    RANDOM_REMASK: "random",
}


@dataclass(frozen=True)
class EditingStrategy:
    """Which editing rule runs after each fill pass."""

    kind: str

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValidationError(f"unknown strategy kind {self.kind!r}")

    @property
    def is_remasking(self) -> bool:
        return self.kind in _DETECTOR_NAMES

    @property
    def detector_name(self) -> str | None:
        return _DETECTOR_NAMES.get(self.kind)

    def validate_config(self, config: StrategyConfig) -> None:
        if self.kind == RANDOM_REMASK and not (0.0 < config.sigma <= 1.0):
            raise ValidationError("random remasking requires sigma in (0, 1]")
        if self.kind in (T2M_LOWPROB, T2M_T2TTRIGGER, T2M_LOGITDIFF) and config.c_max < 1:
            raise ValidationError("targeted remasking requires c_max >= 1")


@dataclass(frozen=True)
class DetectorHit:
    """One flagged position: the score used for ratio-cap ranking (lower =
    remasked first) and the probability that drove the decision (recorded
    on the trajectory event)."""

    score: float
    prob: float


def m2t_step(
    state: GenerationState, posterior: BlockPosterior, config: StrategyConfig
) -> list[TrajectoryEvent]:
    """Fill masked block positions from the posterior.

    Every masked position whose top-1 probability exceeds ``tau_m2t`` is
    committed to its argmax.  When fewer positions qualify than the
    ``n_transfer`` budget, the top-``n_transfer`` most confident masked
    positions are committed instead (forced progress).  Ties break toward
    the lower position index, and the fill is greedy throughout.
    """
    masked = state.masked_positions()
    if not masked:
        return []
    best: dict[int, tuple[int, float]] = {}
    for pos in masked:
        entry = posterior.entry(pos)  # raises on a missing position
        best[pos] = entry.top1()

    qualifying = [pos for pos in masked if best[pos][1] > config.tau_m2t]
    if len(qualifying) >= config.n_transfer:
        chosen = qualifying
    else:
        ranked = sorted(masked, key=lambda pos: (-best[pos][1], pos))
        chosen = ranked[: min(config.n_transfer, len(masked))]

    events = []
    for pos in sorted(chosen):
        token, prob = best[pos]
        state.tokens[pos] = token
        events.append(
            TrajectoryEvent(
                step=state.step,
                phase=FILL,
                pos=pos,
                old=MASK,
                new=token,
                prob=prob,
                detector=None,
                block_index=_block_index(state),
            )
        )
    return events


def t2t_edit_step(
    state: GenerationState,
    posterior: BlockPosterior,
    config: StrategyConfig,
    frozen: set[int] | None = None,
) -> list[TrajectoryEvent]:
    """Overwrite committed tokens whose argmax challenger clears ``tau_t2t``.

    Decisions are computed against the posterior snapshot for every
    editable position, then applied.  ``frozen`` positions (oscillation
    guard) are skipped.
    """
    frozen = frozen or set()
    decisions: list[tuple[int, int, int, float]] = []
    for pos in sorted(editable_positions(state)):
        if pos in frozen:
            continue
        token, prob = posterior.entry(pos).top1()
        if token != state.tokens[pos] and prob > config.tau_t2t:
            decisions.append((pos, state.tokens[pos], token, prob))

    events = []
    for pos, old, new, prob in decisions:
        state.tokens[pos] = new
        state.prev_prob.pop(pos, None)  # the committed token changed
        events.append(
            TrajectoryEvent(
                step=state.step + 1,
                phase=EDIT,
                pos=pos,
                old=old,
                new=new,
                prob=prob,
                detector=None,
                block_index=_block_index(state),
            )
        )
    return events


def detect_lowprob(
    state: GenerationState, posterior: BlockPosterior, tau_lp: float
) -> dict[int, DetectorHit]:
    """Flag committed positions whose own probability fell below ``tau_lp``."""
    hits = {}
    for pos in sorted(editable_positions(state)):
        cp = posterior.current_p(pos)  # contract violation if missing
        if cp < tau_lp:
            hits[pos] = DetectorHit(score=cp, prob=cp)
    return hits


def detect_t2t_trigger(
    state: GenerationState, posterior: BlockPosterior, tau_tr: float
) -> dict[int, DetectorHit]:
    """Flag positions where the replacement trigger would fire.

    The flag condition is exactly the replacement rule's; only the action
    differs downstream.  The ranking score is 1 - top1 probability, so the
    ratio cap keeps the strongest challengers.
    """
    hits = {}
    for pos in sorted(editable_positions(state)):
        token, prob = posterior.entry(pos).top1()
        if token != state.tokens[pos] and prob > tau_tr:
            hits[pos] = DetectorHit(score=1.0 - prob, prob=prob)
    return hits


def detect_logitdiff(
    state: GenerationState, posterior: BlockPosterior, tau_ld: float
) -> dict[int, DetectorHit]:
    """Flag positions whose committed-token probability dropped by more than
    ``tau_ld`` since the previous iteration.

    Positions without a recorded predecessor (first iteration of a block,
    or freshly (re)filled) abstain.  Rising confidence never flags.
    """
    hits = {}
    for pos in sorted(editable_positions(state)):
        prev = state.prev_prob.get(pos)
        if prev is None:
            continue
        cp = posterior.current_p(pos)
        if prev - cp > tau_ld:
            hits[pos] = DetectorHit(score=cp, prob=cp)
    return hits


def detect_random(
    state: GenerationState, sigma: float, rng: random.Random
) -> dict[int, DetectorHit]:
    """Flag each editable position independently with probability ``sigma``.

    sigma = 0 flags nothing; running a whole generation under the random
    strategy still requires sigma > 0 (see EditingStrategy.validate_config).
    """
    if not (0.0 <= sigma <= 1.0):
        raise ValidationError("sigma must lie in [0, 1]")
    hits = {}
    for pos in sorted(editable_positions(state)):
        u = rng.random()
        if u < sigma:
            hits[pos] = DetectorHit(score=u, prob=u)
    return hits


def apply_caps(
    flagged: Mapping[int, DetectorHit],
    remask_counts: Mapping[int, int],
    c_max: int,
    rho_max: float,
    editable_count: int,
) -> list[int]:
    """Apply the per-position budget and the per-step ratio cap.

    Positions already remasked ``c_max`` times drop out first; if more than
    ``floor(rho_max * editable_count)`` remain, the lowest-score (least
    confident) positions are kept, ties toward the lower index.  A cap of
    zero keepable positions means no remasking this step.
    """
    eligible = {pos: hit for pos, hit in flagged.items() if remask_counts.get(pos, 0) < c_max}
    k = math.floor(rho_max * editable_count)
    if len(eligible) > k:
        ranked = sorted(eligible, key=lambda pos: (eligible[pos].score, pos))
        kept = ranked[:k]
    else:
        kept = list(eligible)
    return sorted(kept)


def t2m_step(
    state: GenerationState,
    posterior: BlockPosterior,
    strategy: EditingStrategy,
    config: StrategyConfig,
    rng: random.Random,
) -> list[TrajectoryEvent]:
    """Run one remasking pass under the strategy's detector.

    Capped flagged positions are reset to the mask slot, their remask
    counters incremented, and their stale probability history cleared.  An
    empty return value is the convergence signal.  Under the trajectory
    detector, the probability history of surviving committed positions is
    refreshed afterwards so the next iteration has predecessors to compare
    against.
    """
    detector = strategy.detector_name
    if detector is None:
        raise ValidationError(f"strategy {strategy.kind!r} is not a remasking strategy")
    if strategy.kind == T2M_LOWPROB:
        flagged = detect_lowprob(state, posterior, config.tau_lp)
    elif strategy.kind == T2M_T2TTRIGGER:
        flagged = detect_t2t_trigger(state, posterior, config.tau_tr)
    elif strategy.kind == T2M_LOGITDIFF:
        flagged = detect_logitdiff(state, posterior, config.tau_ld)
    else:
        flagged = detect_random(state, config.sigma, rng)

    editable = editable_positions(state)
    capped = apply_caps(flagged, state.remask_counts, config.c_max, config.rho_max, len(editable))

    events = []
    for pos in capped:
        old = state.tokens[pos]
        state.tokens[pos] = MASK
        state.remask_counts[pos] = state.remask_counts.get(pos, 0) + 1
        state.prev_prob.pop(pos, None)
        events.append(
            TrajectoryEvent(
                step=state.step + 1,
                phase=REMASK,
                pos=pos,
                old=old,
                new=MASK,
                prob=flagged[pos].prob,
                detector=detector,
                block_index=_block_index(state),
            )
        )

    if strategy.kind == T2M_LOGITDIFF:
        for pos in sorted(editable_positions(state)):
            state.prev_prob[pos] = posterior.current_p(pos)
    return events


def _block_index(state: GenerationState) -> int:
    return state.block_index
