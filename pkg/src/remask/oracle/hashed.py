"""Seeded pseudo-random oracle for randomized robustness runs.

Posteriors are derived by hashing (seed, visible tokens, position), so the
oracle is a pure function of its inputs: the same state always scores the
same way, across processes, which the determinism and cap-soundness suites
rely on.  The distributions themselves are arbitrary, which is the point:
they drive the engine through states no hand-written scenario would cover.
"""

from __future__ import annotations

import hashlib
import random
from typing import Mapping, Sequence

from remask.oracle.base import assert_visible_in_bounds, check_current_tokens
from remask.types import BlockPosterior, OracleMeta, PosteriorEntry


class HashedRandomOracle:
    def __init__(self, vocab_size: int = 24, k: int = 4, seed: int = 0, eos_id: int | None = None):
        self._meta = OracleMeta(vocab_size=vocab_size, eos_id=eos_id, k=k)
        self.seed = seed

    @property
    def meta(self) -> OracleMeta:
        return self._meta

    def _rng_for(self, visible: Sequence[int], pos: int) -> random.Random:
        material = f"{self.seed}|{','.join(map(str, visible))}|{pos}".encode()
        digest = hashlib.sha256(material).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def score_block(
        self,
        visible: Sequence[int],
        block: tuple[int, int],
        current: Mapping[int, int],
    ) -> BlockPosterior:
        assert_visible_in_bounds(visible, block)
        check_current_tokens(visible, block, current)
        start, end = block
        vocab = self._meta.vocab_size
        k = self._meta.k
        entries: dict[int, PosteriorEntry] = {}
        for pos in range(start, end):
            rng = self._rng_for(visible, pos)
            candidates = rng.sample(range(vocab), k)
            weights = [rng.random() for _ in candidates]
            mass = 0.4 + 0.6 * rng.random()  # top-k mass stays below 1
            total = sum(weights)
            dist = {tok: mass * w / total for tok, w in zip(candidates, weights)}
            current_p = None
            if pos in current:
                tok = current[pos]
                current_p = dist[tok] if tok in dist else (1.0 - mass) * rng.random()
            ranked = tuple(sorted(dist.items(), key=lambda kv: (-kv[1], kv[0])))
            entries[pos] = PosteriorEntry(top=ranked, current_p=current_p)
        return BlockPosterior(block_start=start, block_end=end, entries=entries, k=k)
