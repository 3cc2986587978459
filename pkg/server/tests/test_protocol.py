"""Wire-protocol contracts: meta, scoring, and rejection of bad requests."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from oracle_server.app import create_app
from oracle_server.scenario import SpecError, parse_spec


@pytest.fixture
def fig2_client(load_doc):
    return TestClient(create_app(spec_doc=load_doc("fig2")), raise_server_exceptions=False)


class TestMeta:
    def test_meta_reports_spec_facts(self, fig2_client):
        doc = fig2_client.get("/v1/meta").json()
        assert doc["vocab_size"] == 12
        assert doc["mode"] == "scripted"
        assert doc["mask_id"] is None
        assert doc["k"] == 8

    def test_meta_reports_stop_token(self, load_doc):
        client = TestClient(create_app(spec_doc=load_doc("fig1a")))
        assert client.get("/v1/meta").json()["eos_id"] == 2


class TestScore:
    def test_context_probe(self, fig2_client):
        body = {"tokens": [1, 3, None], "block": [1, 3], "current": {"1": 3}, "k": 8}
        resp = fig2_client.post("/v1/score", json=body)
        assert resp.status_code == 200
        positions = {p["pos"]: p for p in resp.json()["positions"]}
        assert set(positions) == {1, 2}
        assert positions[2]["top"][0] == {"id": 6, "p": 0.97}
        assert positions[2]["current_p"] is None
        assert positions[1]["current_p"] == 0.95

    def test_unknown_window_answers_default(self, fig2_client):
        body = {"tokens": [1, 10, 10], "block": [1, 3], "current": {"1": 10, "2": 10}, "k": 8}
        positions = fig2_client.post("/v1/score", json=body).json()["positions"]
        assert positions[0]["top"][0] == {"id": 0, "p": 1.0}
        assert positions[0]["current_p"] == 0.0

    def test_k_truncates(self, fig2_client):
        body = {"tokens": [1, None, None], "block": [1, 3], "current": {}, "k": 1}
        positions = fig2_client.post("/v1/score", json=body).json()["positions"]
        assert all(len(p["top"]) == 1 for p in positions)

    def test_responses_are_stateless_and_repeatable(self, fig2_client):
        body = {"tokens": [1, None, None], "block": [1, 3], "current": {}, "k": 8}
        first = fig2_client.post("/v1/score", json=body).json()
        for _ in range(3):
            assert fig2_client.post("/v1/score", json=body).json() == first


class TestRejection:
    def test_tokens_beyond_block_end_rejected(self, fig2_client):
        body = {"tokens": [1, None, None, 7], "block": [1, 3], "current": {}, "k": 8}
        resp = fig2_client.post("/v1/score", json=body)
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_tokens_short_of_block_end_rejected(self, fig2_client):
        body = {"tokens": [1, None], "block": [1, 3], "current": {}, "k": 8}
        assert fig2_client.post("/v1/score", json=body).status_code == 400

    def test_current_outside_block_rejected(self, fig2_client):
        body = {"tokens": [1, 3, None], "block": [1, 3], "current": {"0": 1}, "k": 8}
        assert fig2_client.post("/v1/score", json=body).status_code == 400

    def test_current_disagreeing_with_tokens_rejected(self, fig2_client):
        body = {"tokens": [1, 3, None], "block": [1, 3], "current": {"1": 4}, "k": 8}
        assert fig2_client.post("/v1/score", json=body).status_code == 400

    def test_token_outside_vocab_rejected(self, fig2_client):
        body = {"tokens": [1, 99, None], "block": [1, 3], "current": {"1": 99}, "k": 8}
        assert fig2_client.post("/v1/score", json=body).status_code == 400

    def test_non_json_shape_rejected(self, fig2_client):
        resp = fig2_client.post("/v1/score", json={"tokens": "nope"})
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_bad_block_range_rejected(self, fig2_client):
        body = {"tokens": [], "block": [2, 2], "current": {}, "k": 8}
        assert fig2_client.post("/v1/score", json=body).status_code == 400

    def test_zero_k_rejected(self, fig2_client):
        body = {"tokens": [1, None, None], "block": [1, 3], "current": {}, "k": 0}
        assert fig2_client.post("/v1/score", json=body).status_code == 400


class TestSpecValidation:
    def test_unnormalized_spec_rejected(self):
        with pytest.raises(SpecError):
            parse_spec({"vocab_size": 4, "k": 2, "rules": [], "default_dist": {"0": 0.6}})

    def test_inconsistent_pattern_lengths_rejected(self):
        with pytest.raises(SpecError):
            parse_spec(
                {
                    "vocab_size": 4,
                    "k": 2,
                    "rules": [
                        {"pattern": ["M"], "outputs": {}},
                        {"pattern": ["M", "M"], "outputs": {}},
                    ],
                    "default_dist": {"0": 1.0},
                }
            )


class TestAdapterMode:
    def test_adapter_backend_serves_model_mode(self):
        class FakeAdapter:
            def meta(self):
                return {"vocab_size": 100, "mask_id": 99, "eos_id": 1}

            def score(self, tokens, block, current, k):
                return [
                    {"pos": pos, "top": [{"id": 0, "p": 1.0}], "current_p": None}
                    for pos in range(block[0], block[1])
                ]

        client = TestClient(create_app(adapter=FakeAdapter()))
        meta = client.get("/v1/meta").json()
        assert meta["mode"] == "model"
        assert meta["mask_id"] == 99
        resp = client.post(
            "/v1/score", json={"tokens": [None, None], "block": [0, 2], "current": {}, "k": 4}
        )
        assert [p["pos"] for p in resp.json()["positions"]] == [0, 1]
