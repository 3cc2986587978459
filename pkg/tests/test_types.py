"""Core state types: construction, editability, event well-formedness,
serialization."""

from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from remask.types import (
    MASK,
    OracleMeta,
    StrategyConfig,
    TrajectoryEvent,
    ValidationError,
    editable_positions,
    events_from_jsonl,
    events_to_jsonl,
    new_generation_state,
)
from engine_testlib import make_state


class TestNewGenerationState:
    def test_construction(self):
        config = StrategyConfig(block_len=2, max_new_tokens=4)
        state = new_generation_state([5, 9], config)
        assert state.tokens == [5, 9, MASK, MASK, MASK, MASK]
        assert (state.block_start, state.block_end) == (2, 4)
        assert state.prompt_len == 2
        assert state.step == 0
        assert state.remask_counts == {}

    def test_empty_prompt_rejected(self):
        with pytest.raises(ValidationError):
            new_generation_state([], StrategyConfig())

    def test_mask_in_prompt_rejected(self):
        with pytest.raises(ValidationError):
            new_generation_state([5, MASK], StrategyConfig())

    def test_block_cursor_advances_and_resets_counters(self):
        config = StrategyConfig(block_len=2, max_new_tokens=4)
        state = new_generation_state([5, 9], config)
        state.remask_counts[2] = 1
        state.prev_prob[2] = 0.5
        state.step = 3
        state.advance_block(config.block_len, len(state.tokens))
        assert (state.block_start, state.block_end) == (4, 6)
        assert state.remask_counts == {}
        assert state.prev_prob == {}
        assert state.step == 0
        assert state.block_index == 1


class TestEditablePositions:
    def test_direct_application(self):
        state = make_state([5, 9, 7, MASK], prompt_len=2, block_start=2, block_end=4)
        assert editable_positions(state) == {2}

    def test_all_masked_block(self):
        state = make_state([5, 9, MASK, MASK], prompt_len=2, block_start=2, block_end=4)
        assert editable_positions(state) == set()

    def test_prompt_overlap_stays_frozen(self):
        # A block that overlaps the prompt: prompt positions are excluded.
        state = make_state([5, 9, 7, 3], prompt_len=3, block_start=2, block_end=4)
        assert editable_positions(state) == {3}


class TestTrajectoryEvent:
    def test_fill_shape(self):
        e = TrajectoryEvent(0, "fill", 3, MASK, 7, 0.9, None, 0)
        assert e.to_json_obj()["old"] is None

    def test_fill_must_come_from_mask(self):
        with pytest.raises(ValidationError):
            TrajectoryEvent(0, "fill", 3, 5, 7, 0.9, None, 0)

    def test_remask_must_target_committed(self):
        with pytest.raises(ValidationError):
            TrajectoryEvent(0, "remask", 3, MASK, MASK, 0.9, "lowprob", 0)

    def test_edit_must_change_token(self):
        with pytest.raises(ValidationError):
            TrajectoryEvent(0, "edit", 3, 7, 7, 0.9, None, 0)
        with pytest.raises(ValidationError):
            TrajectoryEvent(0, "edit", 3, MASK, 7, 0.9, None, 0)

    def test_unknown_phase(self):
        with pytest.raises(ValidationError):
            TrajectoryEvent(0, "swap", 3, 5, 7, 0.9, None, 0)

    def test_jsonl_field_order_and_null_mask(self):
        e = TrajectoryEvent(2, "remask", 4, 9, MASK, 0.11, "lowprob", 1)
        line = events_to_jsonl([e]).strip()
        obj = json.loads(line)
        assert list(obj.keys()) == [
            "step", "phase", "pos", "old", "new", "prob", "detector", "block_index",
        ]
        assert obj["new"] is None
        assert obj["old"] == 9

    def test_jsonl_round_trip(self):
        events = [
            TrajectoryEvent(0, "fill", 3, MASK, 7, 0.8, None, 0),
            TrajectoryEvent(1, "edit", 3, 7, 6, 0.64, None, 0),
            TrajectoryEvent(1, "remask", 4, 6, MASK, 0.11, "lowprob", 0),
        ]
        assert events_from_jsonl(events_to_jsonl(events)) == events


class TestStrategyConfig:
    def test_defaults(self):
        c = StrategyConfig()
        assert (c.tau_m2t, c.tau_t2t, c.tau_lp) == (0.7, 0.5, 0.3)
        assert (c.c_max, c.rho_max, c.block_len) == (1, 0.25, 32)
        assert c.n_transfer == 1
        assert c.inner_iter_limit == 4 * c.block_len

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"tau_m2t": 1.5},
            {"tau_lp": -0.1},
            {"rho_max": 0.0},
            {"rho_max": 1.5},
            {"n_transfer": 0},
            {"block_len": 0},
            {"max_new_tokens": 0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValidationError):
            StrategyConfig(**kwargs)

    def test_explicit_inner_iter_cap(self):
        assert StrategyConfig(max_inner_iters=7).inner_iter_limit == 7


class TestOracleMeta:
    def test_special_ids_must_be_distinct(self):
        with pytest.raises(ValidationError):
            OracleMeta(vocab_size=10, eos_id=3, pad_id=3)

    def test_special_ids_must_fit_vocab(self):
        with pytest.raises(ValidationError):
            OracleMeta(vocab_size=10, eos_id=10)


@given(
    st.lists(
        st.tuples(
            st.integers(min_value=0, max_value=5),
            st.sampled_from(["fill", "edit", "remask"]),
            st.integers(min_value=0, max_value=30),
            st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        ),
        max_size=20,
    )
)
def test_jsonl_round_trip_property(raw):
    events = []
    for step, phase, pos, prob in raw:
        if phase == "fill":
            old, new = MASK, 7
        elif phase == "remask":
            old, new = 7, MASK
        else:
            old, new = 7, 8
        events.append(TrajectoryEvent(step, phase, pos, old, new, prob, None, 0))
    assert events_from_jsonl(events_to_jsonl(events)) == events
