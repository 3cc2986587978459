"""Theory-side computations and trajectory forensics.

Everything here is a pure function over immutable inputs: identification
of positions where replacement editing is provably inert, the
targeted-vs-random context-quality comparison, side-by-side trajectory
diffing, outcome classification for A/B runs, and an independent auditor
that re-checks safety-cap compliance from raw trajectory logs without
touching the engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from remask.types import (
    EDIT,
    FILL,
    REMASK,
    BlockPosterior,
    TrajectoryEvent,
    ValidationError,
    is_mask,
)


@dataclass(frozen=True)
class StuckParams:
    """Probability floor and replacement threshold for stuck-set tests."""

    epsilon: float
    tau_t2t: float

    def __post_init__(self) -> None:
        if not (0.0 < self.epsilon < self.tau_t2t <= 1.0):
            raise ValidationError("need 0 < epsilon < tau_t2t <= 1")


def stuck_set(
    posterior: BlockPosterior, committed: Mapping[int, int], params: StuckParams
) -> set[int]:
    """Positions where the committed token is deeply implausible yet no
    single alternative clears the replacement threshold.

    At such positions replacement editing cannot fire, by construction;
    only a detector that judges the committed token alone can act.
    """
    out = set()
    for pos in committed:
        cp = posterior.current_p(pos)
        _, top_p = posterior.entry(pos).top1()
        if cp < params.epsilon and top_p < params.tau_t2t:
            out.add(pos)
    return out


@dataclass(frozen=True)
class StuckReport:
    stuck_positions: tuple[int, ...]
    replace_fired: tuple[int, ...]
    lowprob_missed: tuple[int, ...]

    @property
    def passed(self) -> bool:
        return not self.replace_fired and not self.lowprob_missed

    def to_json_obj(self) -> dict:
        return {
            "stuck_positions": list(self.stuck_positions),
            "replace_fired": list(self.replace_fired),
            "lowprob_missed": list(self.lowprob_missed),
            "passed": self.passed,
        }


def verify_prop_stuck(
    posterior: BlockPosterior,
    committed: Mapping[int, int],
    params: StuckParams,
    tau_lp: float,
) -> StuckReport:
    """Check, position by position, that replacement editing stays silent on
    the stuck set while the low-probability detector fires everywhere on it.

    The two triggers are recomputed inline from the posterior, independent
    of the engine's implementations, so this is a genuine cross-check.
    Requires ``tau_lp > epsilon``; an empty stuck set passes vacuously.
    """
    if tau_lp <= params.epsilon:
        raise ValidationError("hypothesis violated: tau_lp must exceed epsilon")
    stuck = sorted(stuck_set(posterior, committed, params))
    replace_fired = []
    lowprob_missed = []
    for pos in stuck:
        top_tok, top_p = posterior.entry(pos).top1()
        would_replace = top_tok != committed[pos] and top_p > params.tau_t2t
        if would_replace:
            replace_fired.append(pos)
        if not (posterior.current_p(pos) < tau_lp):
            lowprob_missed.append(pos)
    return StuckReport(
        stuck_positions=tuple(stuck),
        replace_fired=tuple(replace_fired),
        lowprob_missed=tuple(lowprob_missed),
    )


@dataclass(frozen=True)
class ContextQualityInput:
    """Counts and signal weights of a committed context.

    ``n_c`` correct positions each contribute ``s_plus`` (> 0), ``n_e``
    erroneous positions each contribute ``s_minus`` (< 0), and ``sigma``
    is the per-token probability of the random remasker being compared
    against.
    """

    n_c: int
    n_e: int
    s_plus: float
    s_minus: float
    sigma: float

    def __post_init__(self) -> None:
        if self.n_c < 0 or self.n_e < 0:
            raise ValidationError("position counts must be non-negative")
        if not self.s_plus > 0:
            raise ValidationError("s_plus must be positive")
        if not self.s_minus < 0:
            raise ValidationError("s_minus must be negative")
        if not (0.0 <= self.sigma <= 1.0):
            raise ValidationError("sigma must lie in [0, 1]")


@dataclass(frozen=True)
class ContextQualityResult:
    q_random: float
    q_targeted: float
    advantage: float

    def to_json_obj(self) -> dict:
        return {
            "q_random": self.q_random,
            "q_targeted": self.q_targeted,
            "advantage": self.advantage,
        }


def context_quality(inp: ContextQualityInput) -> ContextQualityResult:
    """Expected context quality under random vs. targeted remasking.

    Random removal at rate sigma scales the whole context down, destroying
    correct and erroneous signals in equal proportion; targeted removal
    with perfect detection keeps every correct signal and drops every
    erroneous one.  The advantage decomposes into correct signal preserved
    plus erroneous signal removed, and equals the difference of the two
    quality terms exactly.
    """
    q_random = (1.0 - inp.sigma) * (inp.n_c * inp.s_plus + inp.n_e * inp.s_minus)
    q_targeted = inp.n_c * inp.s_plus
    advantage = inp.sigma * inp.n_c * inp.s_plus + (1.0 - inp.sigma) * (-inp.n_e * inp.s_minus)
    return ContextQualityResult(q_random=q_random, q_targeted=q_targeted, advantage=advantage)


@dataclass(frozen=True)
class DetectorQualityResult:
    q_detector: float
    q_random: float
    advantage: float
    base_error_rate: float

    def to_json_obj(self) -> dict:
        return {
            "q_detector": self.q_detector,
            "q_random": self.q_random,
            "advantage": self.advantage,
            "base_error_rate": self.base_error_rate,
        }


def imperfect_detector_quality(
    inp: ContextQualityInput, precision: float, removed: int
) -> DetectorQualityResult:
    """Context quality when the remasker's detector is imperfect.

    A detector of the given precision removing ``removed`` positions takes
    out ``precision * removed`` erroneous and ``(1 - precision) * removed``
    correct ones; the random baseline removing the same count takes them
    out in proportion to the population.  The resulting advantage is
    ``removed * (precision - n_e / n) * (s_plus - s_minus)``: positive
    exactly when the precision exceeds the base error rate.  ``sigma`` on
    the input is ignored here; the removal count is matched across the two
    sides instead.
    """
    n = inp.n_c + inp.n_e
    if n == 0:
        raise ValidationError("need at least one committed position")
    if not (0.0 <= precision <= 1.0):
        raise ValidationError("precision must lie in [0, 1]")
    if removed < 0:
        raise ValidationError("removed count must be non-negative")
    if precision * removed > inp.n_e or (1.0 - precision) * removed > inp.n_c:
        raise ValidationError(
            f"removing {removed} at precision {precision} exceeds the population "
            f"({inp.n_c} correct, {inp.n_e} erroneous)"
        )
    q_detector = (inp.n_c - (1.0 - precision) * removed) * inp.s_plus + (
        inp.n_e - precision * removed
    ) * inp.s_minus
    q_random = (inp.n_c - removed * inp.n_c / n) * inp.s_plus + (
        inp.n_e - removed * inp.n_e / n
    ) * inp.s_minus
    return DetectorQualityResult(
        q_detector=q_detector,
        q_random=q_random,
        advantage=q_detector - q_random,
        base_error_rate=inp.n_e / n,
    )


# ---------------------------------------------------------------------------
# Trajectory diffing


@dataclass(frozen=True)
class PositionTimeline:
    steps_a: tuple[tuple[int, int | None, float], ...]
    steps_b: tuple[tuple[int, int | None, float], ...]
    divergence_step: int | None

    @property
    def final_a(self) -> int | None:
        return self.steps_a[-1][1] if self.steps_a else None

    @property
    def final_b(self) -> int | None:
        return self.steps_b[-1][1] if self.steps_b else None


@dataclass(frozen=True)
class TrajectoryDiff:
    positions: dict[int, PositionTimeline]
    first_divergence_step: int | None
    truncated_to_blocks: int | None

    def to_json_obj(self) -> dict:
        return {
            "first_divergence_step": self.first_divergence_step,
            "truncated_to_blocks": self.truncated_to_blocks,
            "positions": {
                str(pos): {
                    "a": [list(s) for s in tl.steps_a],
                    "b": [list(s) for s in tl.steps_b],
                    "divergence_step": tl.divergence_step,
                    "final_a": tl.final_a,
                    "final_b": tl.final_b,
                }
                for pos, tl in sorted(self.positions.items())
            },
        }

    def render_table(self) -> str:
        """Aligned plain-text table for human review."""

        def fmt_seq(seq):
            return " ".join(
                f"t{s}:{'[M]' if tok is None else tok}@{p:.3g}" for s, tok, p in seq
            ) or "-"

        rows = [("pos", "run A", "run B", "diverges")]
        for pos, tl in sorted(self.positions.items()):
            rows.append(
                (
                    str(pos),
                    fmt_seq(tl.steps_a),
                    fmt_seq(tl.steps_b),
                    "-" if tl.divergence_step is None else f"t{tl.divergence_step}",
                )
            )
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
        if self.truncated_to_blocks is not None:
            lines.append(f"(compared the first {self.truncated_to_blocks} block(s) only)")
        return "\n".join(lines)


def _block_count(events: Sequence[TrajectoryEvent]) -> int:
    return max((e.block_index for e in events), default=-1) + 1


def _timeline(events: Sequence[TrajectoryEvent]) -> dict[int, list[tuple[int, int | None, float]]]:
    out: dict[int, list[tuple[int, int | None, float]]] = {}
    for e in events:
        tok = None if is_mask(e.new) else e.new
        out.setdefault(e.pos, []).append((e.step, tok, e.prob))
    return out


def trajectory_diff(
    events_a: Sequence[TrajectoryEvent],
    events_b: Sequence[TrajectoryEvent],
    prompt_len_a: int | None = None,
    prompt_len_b: int | None = None,
) -> TrajectoryDiff:
    """Per-position divergence report between two trajectories of the same
    prompt/config family.

    Trajectories with different block counts are compared on the common
    block prefix, flagged via ``truncated_to_blocks``.
    """
    if prompt_len_a is not None and prompt_len_b is not None and prompt_len_a != prompt_len_b:
        raise ValidationError(
            f"trajectories have different prompt lengths ({prompt_len_a} vs {prompt_len_b})"
        )
    blocks_a, blocks_b = _block_count(events_a), _block_count(events_b)
    truncated = None
    if blocks_a != blocks_b:
        truncated = min(blocks_a, blocks_b)
        events_a = [e for e in events_a if e.block_index < truncated]
        events_b = [e for e in events_b if e.block_index < truncated]

    tl_a, tl_b = _timeline(events_a), _timeline(events_b)
    positions: dict[int, PositionTimeline] = {}
    global_div: int | None = None
    for pos in sorted(set(tl_a) | set(tl_b)):
        seq_a = tl_a.get(pos, [])
        seq_b = tl_b.get(pos, [])
        div = None
        for i in range(max(len(seq_a), len(seq_b))):
            if i >= len(seq_a):
                div = seq_b[i][0]
                break
            if i >= len(seq_b):
                div = seq_a[i][0]
                break
            if seq_a[i] != seq_b[i]:
                div = min(seq_a[i][0], seq_b[i][0])
                break
        positions[pos] = PositionTimeline(
            steps_a=tuple(seq_a), steps_b=tuple(seq_b), divergence_step=div
        )
        if div is not None and (global_div is None or div < global_div):
            global_div = div
    return TrajectoryDiff(
        positions=positions, first_divergence_step=global_div, truncated_to_blocks=truncated
    )


# ---------------------------------------------------------------------------
# Outcome classification


@dataclass(frozen=True)
class OutcomeStats:
    total: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def to_json_obj(self) -> dict:
        return {"total": self.total, "correct": self.correct, "accuracy": self.accuracy}


@dataclass(frozen=True)
class PairedOutcomes:
    repaired: int
    broken: int
    unchanged: int
    stats_a: OutcomeStats
    stats_b: OutcomeStats

    @property
    def net_gain(self) -> int:
        return self.repaired - self.broken

    def to_json_obj(self) -> dict:
        return {
            "repaired": self.repaired,
            "broken": self.broken,
            "unchanged": self.unchanged,
            "net_gain": self.net_gain,
            "accuracy_a": self.stats_a.accuracy,
            "accuracy_b": self.stats_b.accuracy,
        }


def classify_outcomes(results: Sequence[tuple[Sequence[int], Sequence[int]]]) -> OutcomeStats:
    """Exact-match accuracy over (answer, reference) pairs."""
    correct = sum(1 for answer, reference in results if list(answer) == list(reference))
    return OutcomeStats(total=len(results), correct=correct)


def compare_outcomes(
    results_a: Sequence[tuple[Sequence[int], Sequence[int]]],
    results_b: Sequence[tuple[Sequence[int], Sequence[int]]],
) -> PairedOutcomes:
    """Paired comparison of two strategies on the same task instances."""
    if len(results_a) != len(results_b):
        raise ValidationError(
            f"paired comparison needs equal-length result lists ({len(results_a)} vs {len(results_b)})"
        )
    repaired = broken = unchanged = 0
    for (ans_a, ref_a), (ans_b, ref_b) in zip(results_a, results_b):
        if list(ref_a) != list(ref_b):
            raise ValidationError("paired results disagree on the reference answer")
        ok_a = list(ans_a) == list(ref_a)
        ok_b = list(ans_b) == list(ref_b)
        if not ok_a and ok_b:
            repaired += 1
        elif ok_a and not ok_b:
            broken += 1
        else:
            unchanged += 1
    return PairedOutcomes(
        repaired=repaired,
        broken=broken,
        unchanged=unchanged,
        stats_a=classify_outcomes(results_a),
        stats_b=classify_outcomes(results_b),
    )


# ---------------------------------------------------------------------------
# Independent trajectory audit


@dataclass
class AuditViolation:
    kind: str
    detail: str

    def to_json_obj(self) -> dict:
        return {"kind": self.kind, "detail": self.detail}


@dataclass
class AuditReport:
    events: int
    violations: list[AuditViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json_obj(self) -> dict:
        return {
            "events": self.events,
            "ok": self.ok,
            "violations": [v.to_json_obj() for v in self.violations],
        }


def audit_trajectory(
    events: Sequence[TrajectoryEvent],
    prompt_len: int,
    max_new_tokens: int,
    block_len: int,
    c_max: int,
    rho_max: float,
) -> AuditReport:
    """Re-verify safety-cap compliance and event well-formedness from a raw
    trajectory, independent of the engine.

    The response region is replayed event by event.  Checks: prompt
    immutability, phase shape (fills land on masks, remasks on committed
    tokens), block containment, the per-position remask budget per block,
    and the per-step ratio cap, where the editable count is taken from the
    replayed state at the start of each remask group.
    """
    report = AuditReport(events=len(events))
    total = prompt_len + max_new_tokens
    committed: dict[int, int] = {}

    def block_bounds(block_index: int) -> tuple[int, int]:
        start = prompt_len + block_index * block_len
        return start, min(start + block_len, total)

    def editable_count(block_index: int) -> int:
        start, end = block_bounds(block_index)
        return sum(1 for p in range(start, end) if p in committed)

    remask_counts: dict[tuple[int, int], int] = {}
    group_key: tuple[int, int] | None = None
    group_allowance = 0
    group_size = 0

    def flush_group() -> None:
        nonlocal group_key, group_size
        if group_key is not None and group_size > group_allowance:
            report.violations.append(
                AuditViolation(
                    kind="ratio_cap",
                    detail=(
                        f"block {group_key[0]} step {group_key[1]}: {group_size} remasks "
                        f"exceed the cap of {group_allowance}"
                    ),
                )
            )
        group_key = None
        group_size = 0

    for idx, e in enumerate(events):
        where = f"event {idx} ({e.phase} at pos {e.pos}, block {e.block_index}, step {e.step})"
        if e.pos < prompt_len:
            report.violations.append(
                AuditViolation(kind="prompt_immutability", detail=f"{where}: touches the prompt")
            )
            continue
        start, end = block_bounds(e.block_index)
        if not (start <= e.pos < end):
            report.violations.append(
                AuditViolation(kind="block_containment", detail=f"{where}: outside its block")
            )
            continue

        if e.phase == REMASK:
            key = (e.block_index, e.step)
            if key != group_key:
                flush_group()
                group_key = key
                group_allowance = math.floor(rho_max * editable_count(e.block_index))
            group_size += 1
            if e.pos not in committed:
                report.violations.append(
                    AuditViolation(kind="phase_shape", detail=f"{where}: remask of a mask slot")
                )
                continue
            counter = (e.block_index, e.pos)
            remask_counts[counter] = remask_counts.get(counter, 0) + 1
            if remask_counts[counter] > c_max:
                report.violations.append(
                    AuditViolation(
                        kind="position_budget",
                        detail=(
                            f"{where}: position remasked {remask_counts[counter]} times "
                            f"in one block (budget {c_max})"
                        ),
                    )
                )
            del committed[e.pos]
        else:
            flush_group()
            if e.phase == FILL:
                if e.pos in committed:
                    report.violations.append(
                        AuditViolation(kind="phase_shape", detail=f"{where}: fill of a committed slot")
                    )
                    continue
                committed[e.pos] = e.new
            elif e.phase == EDIT:
                if e.pos not in committed:
                    report.violations.append(
                        AuditViolation(kind="phase_shape", detail=f"{where}: edit of a mask slot")
                    )
                    continue
                committed[e.pos] = e.new
    flush_group()
    return report
