"""Engine service API: endpoints, error mapping, round-trip payloads."""

from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from remask.scenarios import scenario_path
from remask.service import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def load_doc(name: str) -> dict:
    return json.loads(scenario_path(name).read_text(encoding="utf-8"))


class TestHealth:
    def test_health(self, client):
        doc = client.get("/v1/health").json()
        assert doc["status"] == "ok"


class TestScenarioRun:
    def test_inline_document(self, client):
        resp = client.post(
            "/v1/scenario/run",
            json={"scenario": load_doc("drop160"), "strategy": "t2m_lowprob"},
        )
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["summary"]["answer_tokens"][-3:] == [8, 5, 7]
        assert doc["matched"] is True
        assert doc["trajectory_jsonl"].count("\n") == len(doc["events"])

    def test_scenario_path_on_host(self, client):
        resp = client.post(
            "/v1/scenario/run",
            json={"scenario_path": str(scenario_path("fig1a")), "strategy": "t2t_replace"},
        )
        assert resp.status_code == 200
        assert resp.json()["summary"]["answer_tokens"] == [10, 5, 11]

    def test_config_overrides_apply(self, client):
        resp = client.post(
            "/v1/scenario/run",
            json={
                "scenario": load_doc("drop160"),
                "strategy": "t2m_lowprob",
                "config": {"max_inner_iters": 1},
            },
        )
        assert resp.status_code == 200
        assert resp.json()["summary"]["converged"] is False

    def test_bad_strategy_is_400(self, client):
        resp = client.post(
            "/v1/scenario/run", json={"scenario": load_doc("fig2"), "strategy": "t2x"}
        )
        assert resp.status_code == 400

    def test_broken_scenario_is_400(self, client):
        broken = {"vocab_size": 4, "k": 2, "rules": [], "default_dist": {"0": 0.5}}
        resp = client.post("/v1/scenario/run", json={"scenario": broken, "strategy": "none"})
        assert resp.status_code == 400

    def test_missing_scenario_is_422(self, client):
        resp = client.post("/v1/scenario/run", json={"strategy": "none"})
        assert resp.status_code == 422


class TestGenerate:
    def test_generate_with_inline_scenario(self, client):
        resp = client.post(
            "/v1/generate",
            json={
                "prompt": [1, 2, 3],
                "strategy": "t2t_replace",
                "oracle": {"scenario": load_doc("drop160")},
                "config": {"block_len": 6, "max_new_tokens": 6},
            },
        )
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["summary"]["answer_tokens"] == [10, 11, 12, 6, 5, 7]
        assert doc["summary"]["edits"] == 1

    def test_empty_prompt_is_400(self, client):
        resp = client.post(
            "/v1/generate",
            json={"prompt": [], "strategy": "none", "oracle": {"scenario": load_doc("fig2")}},
        )
        assert resp.status_code == 400

    def test_unreachable_oracle_url_is_502(self, client):
        resp = client.post(
            "/v1/generate",
            json={
                "prompt": [1],
                "strategy": "none",
                "oracle": {"url": "http://127.0.0.1:1/nothing"},
            },
        )
        assert resp.status_code == 502


class TestTasksAndSweep:
    def test_gen_tasks_deterministic(self, client):
        body = {"n_instances": 3, "length": 5, "seed": 9}
        a = client.post("/v1/tasks/signal", json=body).json()
        b = client.post("/v1/tasks/signal", json=body).json()
        assert a == b
        assert len(a["tasks"]) == 3

    def test_sweep_small_grid(self, client):
        tasks = client.post("/v1/tasks/signal", json={"n_instances": 3, "length": 5, "seed": 1}).json()[
            "tasks"
        ]
        grid = {
            "lowprob_taus": [0.3],
            "trigger_taus": [0.9],
            "logitdiff_taus": [0.2],
            "c_maxes": [1],
            "rho_maxes": [0.25],
        }
        resp = client.post("/v1/sweep", json={"tasks": tasks, "grid": grid, "parallelism": 2})
        assert resp.status_code == 200
        doc = resp.json()
        assert len(doc["rows"]) == 4
        assert doc["csv"].splitlines()[0].startswith("strategy,tau")
        assert doc["rows"][0]["avg_remasks"] == 0.0

    def test_sweep_config_overrides_keep_task_geometry(self, client):
        # Overriding an unrelated knob (the seed) must not discard the
        # task-derived block length; accuracies stay identical.
        tasks = client.post("/v1/tasks/signal", json={"n_instances": 5, "length": 6, "seed": 3}).json()[
            "tasks"
        ]
        plain = client.post("/v1/sweep", json={"tasks": tasks}).json()
        seeded = client.post("/v1/sweep", json={"tasks": tasks, "config": {"seed": 3}}).json()
        assert [r["accuracy"] for r in seeded["rows"]] == [r["accuracy"] for r in plain["rows"]]
        assert any(r["accuracy"] > 0 for r in seeded["rows"])


class TestAnalyze:
    def test_context_quality(self, client):
        resp = client.post(
            "/v1/analyze/context-quality",
            json={"n_c": 8, "n_e": 2, "s_plus": 1.0, "s_minus": -1.0, "sigma": 0.5},
        )
        assert resp.json() == {"q_random": 3.0, "q_targeted": 8.0, "advantage": 5.0}

    def test_detector_quality_sweep(self, client):
        resp = client.post(
            "/v1/analyze/detector-quality",
            json={"n_c": 8, "n_e": 2, "precisions": [0.1, 0.2, 0.9], "removed": 2},
        )
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["base_error_rate"] == pytest.approx(0.2)
        advantages = {p["precision"]: p["advantage"] for p in doc["points"]}
        assert advantages[0.1] < 0 < advantages[0.9]
        assert advantages[0.2] == pytest.approx(0.0, abs=1e-12)

    def test_stuck_check(self, client):
        body = {
            "entries": [{"pos": 2, "top": [[6, 0.12], [7, 0.11]], "current_p": 2e-05}],
            "committed": {"2": 5},
            "epsilon": 0.01,
            "tau_t2t": 0.5,
            "tau_lp": 0.3,
        }
        doc = client.post("/v1/analyze/stuck", json=body).json()
        assert doc["passed"] is True
        assert doc["stuck_positions"] == [2]

    def test_stuck_hypothesis_violation_is_400(self, client):
        body = {
            "entries": [{"pos": 2, "top": [[6, 0.12]], "current_p": 2e-05}],
            "committed": {"2": 5},
            "epsilon": 0.3,
            "tau_t2t": 0.5,
            "tau_lp": 0.3,
        }
        assert client.post("/v1/analyze/stuck", json=body).status_code == 400

    def test_diff_and_audit_round_trip(self, client):
        runs = {}
        for kind in ("t2t_replace", "t2m_lowprob"):
            runs[kind] = client.post(
                "/v1/scenario/run", json={"scenario": load_doc("drop160"), "strategy": kind}
            ).json()
        diff = client.post(
            "/v1/analyze/diff",
            json={
                "events_a": runs["t2t_replace"]["events"],
                "events_b": runs["t2m_lowprob"]["events"],
            },
        ).json()
        assert diff["report"]["first_divergence_step"] == 1
        audit = client.post(
            "/v1/analyze/audit",
            json={
                "events": runs["t2m_lowprob"]["events"],
                "prompt_len": 3,
                "max_new_tokens": 6,
                "block_len": 6,
                "c_max": 1,
                "rho_max": 0.25,
            },
        ).json()
        assert audit["report"]["ok"] is True
