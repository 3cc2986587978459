"""Whole-run behaviour: scenario replay, convergence, determinism, caps."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from remask.analysis import audit_trajectory
from remask.engine import EditingStrategy, GenerationAborted, generate
from remask.engine.steps import detect_t2t_trigger, t2t_edit_step
from remask.harness import run_scenario
from remask.oracle import HashedRandomOracle, OracleTransportError
from remask.oracle.scenario import TabularOracle, parse_scenario
from remask.types import MASK, StrategyConfig
from engine_testlib import make_posterior, make_state


class TestScenarioReplay:
    def test_drop160_replacement_path(self, drop160_path):
        rep = run_scenario(drop160_path, EditingStrategy("t2t_replace"))
        assert rep.result.answer_tokens[-3:] == [6, 5, 7]
        assert rep.matched is True
        edits = [e for e in rep.result.events if e.phase == "edit"]
        assert [(e.step, e.old, e.new, e.prob) for e in edits] == [(1, 8, 6, 0.64)]

    def test_drop160_remask_path(self, drop160_path):
        rep = run_scenario(drop160_path, EditingStrategy("t2m_lowprob"))
        assert rep.result.answer_tokens[-3:] == [8, 5, 7]
        assert rep.matched is True
        remasks = [e for e in rep.result.events if e.phase == "remask"]
        assert [(e.step, e.old, e.prob, e.detector) for e in remasks] == [(1, 8, 0.11, "lowprob")]
        refill = [e for e in rep.result.events if e.phase == "fill" and e.pos == remasks[0].pos][-1]
        assert (refill.step, refill.new, refill.prob) == (2, 8, 0.94)

    def test_fig1a_inertia_vs_reset(self, fig1a_path):
        keep = run_scenario(fig1a_path, EditingStrategy("t2t_replace"))
        assert keep.result.answer_tokens[1] == 5  # the implausible token survives
        assert not any(e.phase in ("edit", "remask") for e in keep.result.events)
        reset = run_scenario(fig1a_path, EditingStrategy("t2m_lowprob"))
        remasks = [e for e in reset.result.events if e.phase == "remask"]
        assert [(e.old, e.prob) for e in remasks] == [(5, 2e-05)]
        assert reset.result.answer_tokens[1] == 7

    def test_fig1c_joint_settlement(self, fig1c_path):
        greedy = run_scenario(fig1c_path, EditingStrategy("t2t_replace"))
        joint = run_scenario(fig1c_path, EditingStrategy("t2m_lowprob"))
        reference = [3, 4, 5]
        assert joint.result.answer_tokens[-3:] == reference
        assert greedy.result.answer_tokens[-3:] != reference
        assert joint.matched and greedy.matched

    def test_fig2_generation(self, fig2_path):
        for kind in ("t2t_replace", "t2m_lowprob"):
            rep = run_scenario(fig2_path, EditingStrategy(kind))
            assert rep.result.answer_tokens == [3, 6]

    def test_pure_fill_strategy_never_edits(self, drop160_path):
        rep = run_scenario(drop160_path, EditingStrategy("none"))
        phases = {e.phase for e in rep.result.events}
        assert phases == {"fill"}
        assert rep.result.converged

    def test_remask_stat_matches_event_count(self, drop160_path):
        rep = run_scenario(drop160_path, EditingStrategy("t2m_lowprob"))
        assert rep.result.remasks == sum(1 for e in rep.result.events if e.phase == "remask")


def two_block_doc() -> dict:
    return {
        "vocab_size": 8,
        "k": 4,
        "rules": [
            {
                "pattern": ["M", "M"],
                "outputs": {"0": {"3": 0.9, "0": 0.1}, "1": {"4": 0.8, "0": 0.2}},
            }
        ],
        "default_dist": {"0": 1.0},
        "task": {"name": "twoblock", "prompt": [1], "config": {"block_len": 2, "max_new_tokens": 4}},
    }


class TestBlockStructure:
    def test_blocks_freeze_in_order(self):
        rep = run_scenario(two_block_doc(), EditingStrategy("none"))
        block_seq = [e.block_index for e in rep.result.events]
        assert block_seq == sorted(block_seq)
        assert set(block_seq) == {0, 1}
        assert rep.result.answer_tokens == [3, 4, 3, 4]

    def test_eos_stops_at_block_boundary(self):
        doc = two_block_doc()
        doc["eos_id"] = 4
        rep = run_scenario(doc, EditingStrategy("none"))
        assert len(rep.result.block_summaries) == 1
        assert rep.result.answer_tokens == [3]  # truncated before the stop token

    def test_step_counter_resets_per_block(self):
        rep = run_scenario(two_block_doc(), EditingStrategy("none"))
        steps_block1 = [e.step for e in rep.result.events if e.block_index == 1]
        assert min(steps_block1) == 0


class TestGuards:
    def test_iteration_cap_flags_non_convergence(self, drop160_path):
        rep = run_scenario(
            drop160_path, EditingStrategy("t2m_lowprob"), config_overrides={"max_inner_iters": 1}
        )
        assert not rep.result.converged
        assert any("did not converge" in w for w in rep.result.warnings)

    def test_oscillating_replacement_freezes(self):
        # Two rules that keep flipping one token; the freeze guard must stop it.
        doc = {
            "vocab_size": 8,
            "k": 4,
            "rules": [
                {"pattern": ["M"], "outputs": {"0": {"3": 0.9, "0": 0.1}}},
                {"pattern": [3], "outputs": {"0": {"4": 0.9, "3": 0.1}}},
                {"pattern": [4], "outputs": {"0": {"3": 0.9, "4": 0.1}}},
            ],
            "default_dist": {"0": 1.0},
            "task": {
                "name": "flip",
                "prompt": [1],
                "config": {"block_len": 1, "max_new_tokens": 1, "max_inner_iters": 12},
            },
        }
        rep = run_scenario(doc, EditingStrategy("t2t_replace"))
        assert rep.result.converged
        assert any("frozen" in w for w in rep.result.warnings)
        edits = [e for e in rep.result.events if e.phase == "edit"]
        assert len(edits) == 2 * 1 + 2  # the freeze limit with c_max=1

    def test_oracle_failure_preserves_partial_trajectory(self):
        class FlakyOracle:
            def __init__(self, inner, fail_after):
                self.inner, self.calls, self.fail_after = inner, 0, fail_after

            @property
            def meta(self):
                return self.inner.meta

            def score_block(self, visible, block, current):
                self.calls += 1
                if self.calls > self.fail_after:
                    raise OracleTransportError("connection lost")
                return self.inner.score_block(visible, block, current)

        inner = TabularOracle(parse_scenario(two_block_doc()))
        flaky = FlakyOracle(inner, fail_after=1)
        with pytest.raises(GenerationAborted) as exc_info:
            generate([1], flaky, EditingStrategy("none"), StrategyConfig(block_len=2, max_new_tokens=4))
        partial = exc_info.value.events
        assert [e.block_index for e in partial] == [0, 0]


def random_run(seed: int, strategy_kind: str) -> tuple:
    oracle = HashedRandomOracle(vocab_size=20, k=4, seed=seed)
    config = StrategyConfig(
        block_len=4,
        max_new_tokens=8,
        seed=seed,
        tau_m2t=0.6,
        sigma=0.4,
        c_max=1 + seed % 2,
        rho_max=[0.25, 0.5, 1.0][seed % 3],
    )
    result = generate([1, 2], oracle, EditingStrategy(strategy_kind), config)
    return result, config


STRATEGY_CYCLE = ("t2t_replace", "t2m_lowprob", "t2m_t2ttrigger", "t2m_logitdiff", "random_remask")


class TestRandomizedRuns:
    def test_deterministic_trajectories(self):
        for seed in range(10):
            kind = STRATEGY_CYCLE[seed % len(STRATEGY_CYCLE)]
            a, _ = random_run(seed, kind)
            b, _ = random_run(seed, kind)
            assert a.trajectory_jsonl() == b.trajectory_jsonl()

    def test_prompt_never_touched_and_events_well_formed(self):
        for seed in range(20):
            kind = STRATEGY_CYCLE[seed % len(STRATEGY_CYCLE)]
            result, _ = random_run(seed, kind)
            assert all(e.pos >= 2 for e in result.events)

    def test_caps_hold_under_audit(self):
        for seed in range(30):
            kind = STRATEGY_CYCLE[seed % len(STRATEGY_CYCLE)]
            result, config = random_run(seed, kind)
            report = audit_trajectory(
                result.events,
                prompt_len=2,
                max_new_tokens=config.max_new_tokens,
                block_len=config.block_len,
                c_max=config.c_max,
                rho_max=config.rho_max,
            )
            assert report.ok, report.to_json_obj()

    def test_iteration_counts_bounded(self):
        for seed in range(20):
            kind = STRATEGY_CYCLE[seed % len(STRATEGY_CYCLE)]
            result, config = random_run(seed, kind)
            assert all(s.iterations <= config.inner_iter_limit for s in result.block_summaries)


@settings(max_examples=150, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=10_000),
    tau=st.floats(min_value=0.05, max_value=0.95, allow_nan=False),
)
def test_trigger_equivalence_property(seed, tau):
    """The remask trigger that reuses the replacement rule must flag exactly
    the positions the replacement step would edit, for any posterior."""
    rng = random.Random(seed)
    n = rng.randint(1, 6)
    tokens = [1] + [rng.randrange(12) for _ in range(n)]
    masked = [i + 1 for i in range(n) if rng.random() < 0.3]
    for pos in masked:
        tokens[pos] = MASK
    entries = {}
    for i in range(1, n + 1):
        top1 = (rng.randrange(12), rng.uniform(0, 1))
        cp = None if tokens[i] == MASK else rng.uniform(0, 1 - top1[1] if top1[0] != tokens[i] else top1[1])
        entries[i] = ([top1], cp if tokens[i] != MASK else None)
    post = make_posterior(entries, block=(1, n + 1))
    state_a = make_state(list(tokens), prompt_len=1)
    state_b = make_state(list(tokens), prompt_len=1)
    flags = set(detect_t2t_trigger(state_a, post, tau))
    edits = {e.pos for e in t2t_edit_step(state_b, post, StrategyConfig(tau_t2t=tau, block_len=n, max_new_tokens=n))}
    assert flags == edits
