"""Block-diffusion decoding with pluggable post-commit editing.

The package decomposes into: domain types (`remask.types`), probability
oracles (`remask.oracle`), the decoding state machine (`remask.engine`),
theory checks and trajectory forensics (`remask.analysis`), the scenario
runner and sweep harness (`remask.harness`), an HTTP service wrapping it
all (`remask.service`), and a thin CLI client (`remask.cli`).
"""

from remask.types import (
    MASK,
    BlockPosterior,
    ContractViolationError,
    GenerationState,
    OracleMeta,
    PosteriorEntry,
    StrategyConfig,
    TrajectoryEvent,
    ValidationError,
    editable_positions,
    new_generation_state,
)
from remask.engine import EditingStrategy, GenerationAborted, RunResult, generate, run_block

__version__ = "0.1.0"

__all__ = [
    "MASK",
    "BlockPosterior",
    "ContractViolationError",
    "GenerationState",
    "OracleMeta",
    "PosteriorEntry",
    "StrategyConfig",
    "TrajectoryEvent",
    "ValidationError",
    "editable_positions",
    "new_generation_state",
    "EditingStrategy",
    "GenerationAborted",
    "RunResult",
    "generate",
    "run_block",
    "__version__",
]
