"""Oracle protocol and the engine-side scoring helper."""

from __future__ import annotations

from typing import Mapping, Protocol, Sequence, runtime_checkable

from remask.types import BlockPosterior, GenerationState, OracleMeta, editable_positions, is_mask


class OracleError(RuntimeError):
    """Base class for oracle failures."""


class OracleTransportError(OracleError):
    """The remote oracle could not be reached or the connection failed."""


class OracleProtocolError(OracleError):
    """The oracle returned a malformed or contract-violating response."""


class OracleVocabError(OracleError):
    """Token ids in a request or response fall outside the declared vocabulary."""


@runtime_checkable
class Oracle(Protocol):
    """A probability oracle over block states.

    Implementations are immutable after construction and safe to share
    across concurrent generation runs.
    """

    @property
    def meta(self) -> OracleMeta: ...

    def score_block(
        self,
        visible: Sequence[int],
        block: tuple[int, int],
        current: Mapping[int, int],
    ) -> BlockPosterior:
        """Score every position of ``block``.

        ``visible`` is the token sequence up to ``block[1]`` only (mask
        slots included); nothing beyond the block end is ever shown to an
        oracle.  ``current`` maps each committed editable position to its
        token so the oracle can report that token's probability.
        """
        ...


def score_state(oracle: Oracle, state: GenerationState) -> BlockPosterior:
    """Query ``oracle`` for the active block of ``state``.

    Enforces the causality contract (the oracle sees nothing beyond the
    block end) and validates the response shape before handing it to the
    engine.
    """
    visible = state.tokens[: state.block_end]
    current = {i: state.tokens[i] for i in sorted(editable_positions(state))}
    posterior = oracle.score_block(visible, (state.block_start, state.block_end), current)
    posterior.validate()
    for pos in state.block_positions():
        entry = posterior.entry(pos)
        if pos in current and entry.current_p is None:
            raise OracleProtocolError(f"oracle omitted committed-token probability at position {pos}")
    return posterior


def assert_visible_in_bounds(visible: Sequence[int], block: tuple[int, int]) -> None:
    start, end = block
    if len(visible) != end:
        raise OracleProtocolError(
            f"visible sequence must end exactly at the block end ({end}), got length {len(visible)}"
        )
    if not (0 <= start < end):
        raise OracleProtocolError(f"invalid block range [{start}, {end})")


def check_current_tokens(
    visible: Sequence[int], block: tuple[int, int], current: Mapping[int, int]
) -> None:
    start, end = block
    for pos, tok in current.items():
        if not (start <= pos < end):
            raise OracleProtocolError(f"current-token position {pos} outside block")
        if is_mask(tok):
            raise OracleProtocolError(f"current-token entry at {pos} is a mask")
        if visible[pos] != tok:
            raise OracleProtocolError(f"current-token entry at {pos} disagrees with visible sequence")
