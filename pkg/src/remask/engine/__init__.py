"""The decoding state machine: mask filling, post-commit editing, safety
caps, inner-loop convergence, block advancement, trajectory recording."""

from remask.engine.steps import (
    DetectorHit,
    EditingStrategy,
    STRATEGY_KINDS,
    apply_caps,
    detect_logitdiff,
    detect_lowprob,
    detect_random,
    detect_t2t_trigger,
    m2t_step,
    t2m_step,
    t2t_edit_step,
)
from remask.engine.runner import (
    BlockSummary,
    GenerationAborted,
    RunResult,
    generate,
    run_block,
)

__all__ = [
    "DetectorHit",
    "EditingStrategy",
    "STRATEGY_KINDS",
    "apply_caps",
    "detect_logitdiff",
    "detect_lowprob",
    "detect_random",
    "detect_t2t_trigger",
    "m2t_step",
    "t2m_step",
    "t2t_edit_step",
    "BlockSummary",
    "GenerationAborted",
    "RunResult",
    "generate",
    "run_block",
]
