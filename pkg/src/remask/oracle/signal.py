"""Synthetic context-sensitive oracle for sweep experiments.

Each position has one true token and one distractor.  The probability the
oracle assigns to the true token rises with the number of committed block
neighbours that match the reference and falls with the number that
mismatch it:

    p(true at i) = logistic(alpha0 + bias_i + alpha1 * n_aligned(i)
                                            - alpha2 * n_adversarial(i))

with the remaining mass on the distractor.  Masked neighbours contribute
nothing, so with alpha1, alpha2 > 0 the oracle orders context signals
strictly: an extra matching neighbour helps, a mask is neutral, an extra
mismatching neighbour hurts.  The optional per-position ``bias`` makes task
instances heterogeneous (some positions start out confidently wrong); it
defaults to zero everywhere.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from remask.oracle.base import assert_visible_in_bounds, check_current_tokens
from remask.types import (
    BlockPosterior,
    OracleMeta,
    PosteriorEntry,
    ValidationError,
    is_mask,
    logistic,
)


@dataclass(frozen=True)
class SignalModelParams:
    """Parameters of the signal-model oracle.

    ``reference`` is the true token sequence for the response region,
    starting at ``response_start`` (the prompt length of the task that owns
    this oracle).  ``distractor`` maps each reference index to a token that
    differs from the reference there; when empty it is derived
    deterministically from the construction seed.  ``bias`` maps reference
    indices to additive logit offsets (absent = 0).
    """

    reference: tuple[int, ...]
    alpha0: float = 0.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    distractor: dict[int, int] = field(default_factory=dict)
    bias: dict[int, float] = field(default_factory=dict)
    response_start: int = 1
    vocab_size: int = 32

    def __post_init__(self) -> None:
        if not self.reference:
            raise ValidationError("reference sequence must be non-empty")
        if any(t < 0 or t >= self.vocab_size for t in self.reference):
            raise ValidationError("reference tokens must lie inside the vocabulary")
        for i, tok in self.distractor.items():
            if i < 0 or i >= len(self.reference):
                raise ValidationError(f"distractor index {i} outside the reference")
            if tok == self.reference[i]:
                raise ValidationError(f"distractor at index {i} equals the reference token")
            if tok < 0 or tok >= self.vocab_size:
                raise ValidationError(f"distractor token {tok} outside the vocabulary")
        for i in self.bias:
            if i < 0 or i >= len(self.reference):
                raise ValidationError(f"bias index {i} outside the reference")


class SignalOracle:
    """Deterministic oracle realizing the aligned/null/adversarial ordering."""

    def __init__(self, params: SignalModelParams, distractor: Mapping[int, int]):
        self.params = params
        self.distractor = dict(distractor)
        self._meta = OracleMeta(vocab_size=params.vocab_size, k=2)

    @property
    def meta(self) -> OracleMeta:
        return self._meta

    def _ref_index(self, pos: int) -> int | None:
        idx = pos - self.params.response_start
        if 0 <= idx < len(self.params.reference):
            return idx
        return None

    def true_prob(self, visible: Sequence[int], block: tuple[int, int], pos: int) -> float:
        """p(true token at pos) given the committed neighbours in the block."""
        idx = self._ref_index(pos)
        if idx is None:
            return 1.0
        p = self.params
        n_aligned = 0
        n_adv = 0
        for j in range(block[0], block[1]):
            if j == pos or is_mask(visible[j]):
                continue
            j_idx = self._ref_index(j)
            if j_idx is None:
                continue
            if visible[j] == p.reference[j_idx]:
                n_aligned += 1
            else:
                n_adv += 1
        logit = p.alpha0 + p.bias.get(idx, 0.0) + p.alpha1 * n_aligned - p.alpha2 * n_adv
        return logistic(logit)

    def score_block(
        self,
        visible: Sequence[int],
        block: tuple[int, int],
        current: Mapping[int, int],
    ) -> BlockPosterior:
        assert_visible_in_bounds(visible, block)
        check_current_tokens(visible, block, current)
        start, end = block
        entries: dict[int, PosteriorEntry] = {}
        for pos in range(start, end):
            idx = self._ref_index(pos)
            if idx is None:
                # Outside the reference there is nothing to predict; emit a
                # degenerate distribution on the pad/eos-free token 0.
                dist = {0: 1.0}
            else:
                p_true = self.true_prob(visible, block, pos)
                dist = {
                    self.params.reference[idx]: p_true,
                    self.distractor[idx]: 1.0 - p_true,
                }
            ranked = tuple(sorted(dist.items(), key=lambda kv: (-kv[1], kv[0])))
            current_p = dist.get(current[pos], 0.0) if pos in current else None
            entries[pos] = PosteriorEntry(top=ranked, current_p=current_p)
        return BlockPosterior(block_start=start, block_end=end, entries=entries, k=self._meta.k)


def make_signal_oracle(params: SignalModelParams, seed: int = 0) -> SignalOracle:
    """Build a signal oracle; missing distractors are derived from ``seed``.

    The oracle itself is a pure function of (params, state): the seed is
    consumed only while filling in unspecified distractor tokens.
    """
    rng = random.Random(seed)
    distractor = dict(params.distractor)
    for i, ref_tok in enumerate(params.reference):
        if i in distractor:
            continue
        choices = [t for t in range(params.vocab_size) if t != ref_tok]
        distractor[i] = rng.choice(choices)
    return SignalOracle(params, distractor)
