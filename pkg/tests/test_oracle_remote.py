"""Remote oracle client against a mocked transport: happy path and the
three failure classes (transport, protocol, vocabulary)."""

from __future__ import annotations

import json

import httpx
import pytest

from remask.oracle import (
    OracleProtocolError,
    OracleTransportError,
    OracleVocabError,
    RemoteOracle,
)
from remask.types import MASK


META = {"vocab_size": 12, "mask_id": None, "eos_id": None, "pad_id": None, "mode": "scripted", "k": 4}


def client_for(handler) -> httpx.Client:
    return httpx.Client(transport=httpx.MockTransport(handler), base_url="http://oracle.test")


def oracle_with(score_payload, meta=META) -> RemoteOracle:
    def handler(request: httpx.Request) -> httpx.Response:
        if request.url.path == "/v1/meta":
            return httpx.Response(200, json=meta)
        if request.url.path == "/v1/score":
            body = score_payload(json.loads(request.content)) if callable(score_payload) else score_payload
            if isinstance(body, httpx.Response):
                return body
            return httpx.Response(200, json=body)
        return httpx.Response(404, json={"error": "no such route"})

    return RemoteOracle("http://oracle.test", client=client_for(handler))


class TestHappyPath:
    def test_meta_and_score(self):
        def payload(req):
            assert req["tokens"] == [1, None]
            assert req["block"] == [1, 2]
            return {
                "positions": [
                    {"pos": 1, "top": [{"id": 3, "p": 0.9}, {"id": 4, "p": 0.05}], "current_p": None}
                ]
            }

        oracle = oracle_with(payload)
        assert oracle.meta.vocab_size == 12
        post = oracle.score_block([1, MASK], (1, 2), {})
        assert post.entry(1).top1() == (3, 0.9)

    def test_mask_travels_as_null_and_current_as_strings(self):
        seen = {}

        def payload(req):
            seen.update(req)
            return {"positions": [{"pos": 1, "top": [{"id": 3, "p": 0.9}], "current_p": 0.4}]}

        oracle = oracle_with(payload)
        oracle.score_block([7, 5], (1, 2), {1: 5})
        assert seen["tokens"] == [7, 5]
        assert seen["current"] == {"1": 5}
        assert seen["k"] == 4  # from the advertised meta


class TestFailures:
    def test_transport_error(self):
        def handler(request):
            raise httpx.ConnectError("refused")

        with pytest.raises(OracleTransportError):
            RemoteOracle("http://oracle.test", client=client_for(handler))

    def test_http_error_status_is_protocol_error(self):
        oracle = oracle_with(httpx.Response(500, json={"error": "boom"}))
        with pytest.raises(OracleProtocolError):
            oracle.score_block([1, MASK], (1, 2), {})

    def test_missing_position_is_protocol_error(self):
        oracle = oracle_with({"positions": []})
        with pytest.raises(OracleProtocolError, match="missing block positions"):
            oracle.score_block([1, MASK], (1, 2), {})

    def test_duplicate_position_is_protocol_error(self):
        entry = {"pos": 1, "top": [{"id": 3, "p": 0.9}], "current_p": None}
        oracle = oracle_with({"positions": [entry, entry]})
        with pytest.raises(OracleProtocolError, match="duplicate"):
            oracle.score_block([1, MASK], (1, 2), {})

    def test_out_of_block_position_is_protocol_error(self):
        oracle = oracle_with(
            {
                "positions": [
                    {"pos": 1, "top": [{"id": 3, "p": 0.9}], "current_p": None},
                    {"pos": 9, "top": [{"id": 3, "p": 0.9}], "current_p": None},
                ]
            }
        )
        with pytest.raises(OracleProtocolError, match="out-of-block"):
            oracle.score_block([1, MASK], (1, 2), {})

    def test_vocab_mismatch_is_its_own_error(self):
        oracle = oracle_with(
            {"positions": [{"pos": 1, "top": [{"id": 99, "p": 0.9}], "current_p": None}]}
        )
        with pytest.raises(OracleVocabError):
            oracle.score_block([1, MASK], (1, 2), {})

    def test_malformed_meta_is_protocol_error(self):
        def handler(request):
            return httpx.Response(200, json={"nope": 1})

        with pytest.raises(OracleProtocolError):
            RemoteOracle("http://oracle.test", client=client_for(handler))

    def test_non_json_body_is_protocol_error(self):
        def handler(request):
            if request.url.path == "/v1/meta":
                return httpx.Response(200, json=META)
            return httpx.Response(200, content=b"<html!")

        oracle = RemoteOracle("http://oracle.test", client=client_for(handler))
        with pytest.raises(OracleProtocolError):
            oracle.score_block([1, MASK], (1, 2), {})
