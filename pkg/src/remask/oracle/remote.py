"""HTTP client for the remote scoring protocol.

The wire format, shared with the reference scoring server:

    GET  /v1/meta   -> {"vocab_size": int, "mask_id": int|null,
                        "eos_id": int|null, "mode": str}
    POST /v1/score  <- {"tokens": [int|null, ...],   # null = mask slot
                        "block": [start, end],
                        "current": {"<pos>": int, ...},
                        "k": int}
                    -> {"positions": [{"pos": int,
                                       "top": [{"id": int, "p": float}, ...],
                                       "current_p": float|null}, ...]}

``tokens`` always ends exactly at the block end: the client never sends
positions beyond it.  Field names on both sides must match bit-exactly.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import httpx

from remask.oracle.base import (
    OracleProtocolError,
    OracleTransportError,
    OracleVocabError,
)
from remask.types import BlockPosterior, OracleMeta, PosteriorEntry, is_mask


class RemoteOracle:
    """Client for a scoring server; one instance may serve many runs."""

    def __init__(self, base_url: str, timeout: float = 30.0, client: httpx.Client | None = None):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)
        self._meta = self._fetch_meta()

    @property
    def meta(self) -> OracleMeta:
        return self._meta

    def close(self) -> None:
        self._client.close()

    def _fetch_meta(self) -> OracleMeta:
        doc = self._request("GET", "/v1/meta")
        try:
            return OracleMeta(
                vocab_size=int(doc["vocab_size"]),
                eos_id=doc.get("eos_id"),
                pad_id=doc.get("pad_id"),
                k=int(doc.get("k", 8)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise OracleProtocolError(f"malformed meta response: {doc!r}") from exc

    def _request(self, method: str, path: str, json_body: dict | None = None) -> dict:
        url = self.base_url + path
        try:
            resp = self._client.request(method, url, json=json_body)
        except httpx.HTTPError as exc:
            raise OracleTransportError(f"{method} {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise OracleProtocolError(f"{method} {url} returned {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise OracleProtocolError(f"{method} {url} returned non-JSON body") from exc

    def score_block(
        self,
        visible: Sequence[int],
        block: tuple[int, int],
        current: Mapping[int, int],
    ) -> BlockPosterior:
        start, end = block
        body = {
            "tokens": [None if is_mask(t) else t for t in visible],
            "block": [start, end],
            "current": {str(pos): tok for pos, tok in sorted(current.items())},
            "k": self._meta.k,
        }
        doc = self._request("POST", "/v1/score", body)
        try:
            raw_positions = doc["positions"]
        except (KeyError, TypeError):
            raise OracleProtocolError(f"score response missing positions: {doc!r}") from None

        entries: dict[int, PosteriorEntry] = {}
        for item in raw_positions:
            try:
                pos = int(item["pos"])
                top = tuple((int(c["id"]), float(c["p"])) for c in item["top"])
                current_p = item.get("current_p")
            except (KeyError, TypeError, ValueError) as exc:
                raise OracleProtocolError(f"malformed position entry: {item!r}") from exc
            if pos in entries:
                raise OracleProtocolError(f"duplicate position {pos} in score response")
            for tok, _ in top:
                if tok < 0 or tok >= self._meta.vocab_size:
                    raise OracleVocabError(
                        f"token {tok} outside vocabulary of size {self._meta.vocab_size}"
                    )
            entries[pos] = PosteriorEntry(
                top=top, current_p=None if current_p is None else float(current_p)
            )
        missing = [pos for pos in range(start, end) if pos not in entries]
        if missing:
            raise OracleProtocolError(f"score response missing block positions {missing}")
        extra = [pos for pos in entries if not (start <= pos < end)]
        if extra:
            raise OracleProtocolError(f"score response contains out-of-block positions {extra}")
        return BlockPosterior(block_start=start, block_end=end, entries=entries, k=self._meta.k)
