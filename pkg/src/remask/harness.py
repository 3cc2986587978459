"""Scenario runner, synthetic task generation, and the ablation sweep.

The sweep crosses three remasking detectors over their threshold ranges
with the per-position budget and the per-step ratio cap, plus one
replacement-editing baseline: 1 + (5 + 3 + 4) x 3 x 3 = 109 configurations.
Each configuration runs every task instance single-sample greedy; the
output is one CSV row per configuration with both cost columns (edits and
remasks) reported separately.  Everything is deterministic given the seed:
re-running a sweep reproduces the CSV byte for byte.
"""

from __future__ import annotations

import csv
import io
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from remask.engine import EditingStrategy, GenerationAborted, RunResult, generate
from remask.engine.steps import T2M_LOGITDIFF, T2M_LOWPROB, T2M_T2TTRIGGER, T2T_REPLACE
from remask.oracle import Oracle, RemoteOracle, SignalModelParams, load_scenario, make_signal_oracle
from remask.oracle.scenario import TabularOracle, parse_scenario
from remask.types import StrategyConfig, ValidationError

SWEEP_CSV_COLUMNS = (
    "strategy",
    "tau",
    "c_max",
    "rho_max",
    "accuracy",
    "avg_remasks",
    "avg_edits",
    "avg_inner_iters",
)


# ---------------------------------------------------------------------------
# Scenario running


@dataclass
class ScenarioReport:
    name: str
    strategy: str
    result: RunResult
    expected: list[int] | None
    matched: bool | None

    def summary(self) -> dict:
        doc = self.result.summary()
        doc["scenario"] = self.name
        doc["strategy"] = self.strategy
        if self.expected is not None:
            doc["expected"] = self.expected
            doc["matched"] = self.matched
        return doc


def resolve_scenario_config(task: Mapping, overrides: Mapping | None = None) -> StrategyConfig:
    """Defaults, then the scenario's own config section, then caller overrides."""
    merged: dict = {}
    merged.update(task.get("config", {}))
    merged.update(overrides or {})
    return StrategyConfig(**merged)


def run_scenario(
    scenario: str | Path | Mapping,
    strategy: EditingStrategy,
    config_overrides: Mapping | None = None,
    oracle: Oracle | None = None,
) -> ScenarioReport:
    """Run one scripted scenario under a strategy.

    ``scenario`` may be a path or an already-parsed document.  When
    ``oracle`` is given (e.g. a remote client) it replaces the in-process
    tabular oracle, but the scenario file still supplies the prompt,
    config, and expectations.
    """
    if isinstance(scenario, (str, Path)):
        tabular = load_scenario(scenario)
    else:
        tabular = TabularOracle(parse_scenario(scenario))
    task = tabular.spec.task
    if "prompt" not in task:
        raise ValidationError("scenario has no task.prompt; nothing to run")
    config = resolve_scenario_config(task, config_overrides)
    result = generate(task["prompt"], oracle or tabular, strategy, config)
    expected = task.get("expect", {}).get(strategy.kind)
    matched = None if expected is None else list(result.answer_tokens) == list(expected)
    return ScenarioReport(
        name=task.get("name", "scenario"),
        strategy=strategy.kind,
        result=result,
        expected=expected,
        matched=matched,
    )


# ---------------------------------------------------------------------------
# Synthetic signal-model tasks


@dataclass(frozen=True)
class SignalTaskSpec:
    """Knobs of the synthetic task family.

    A fraction of positions carries a strongly negative bias (they start
    out confidently wrong and poison their neighbours); the rest lean
    mildly toward the true token.  ``alpha2 >= 2 * alpha1`` puts the task
    in the high-adversarial-strength regime.
    """

    alpha0: float = 0.0
    alpha1: float = 1.2
    alpha2: float = 3.6
    frac_adversarial: float = 0.25
    bias_adversarial: float = -2.2
    bias_normal: float = 0.9
    vocab_size: int = 32

    def to_json_obj(self) -> dict:
        return {
            "alpha0": self.alpha0,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "frac_adversarial": self.frac_adversarial,
            "bias_adversarial": self.bias_adversarial,
            "bias_normal": self.bias_normal,
            "vocab_size": self.vocab_size,
        }


@dataclass(frozen=True)
class TaskInstance:
    name: str
    prompt: tuple[int, ...]
    reference: tuple[int, ...]
    params: SignalModelParams
    oracle_seed: int

    def build_oracle(self) -> Oracle:
        return make_signal_oracle(self.params, seed=self.oracle_seed)

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "prompt": list(self.prompt),
            "reference": list(self.reference),
            "oracle_seed": self.oracle_seed,
            "params": {
                "reference": list(self.params.reference),
                "alpha0": self.params.alpha0,
                "alpha1": self.params.alpha1,
                "alpha2": self.params.alpha2,
                "distractor": {str(k): v for k, v in sorted(self.params.distractor.items())},
                "bias": {str(k): v for k, v in sorted(self.params.bias.items())},
                "response_start": self.params.response_start,
                "vocab_size": self.params.vocab_size,
            },
        }

    @classmethod
    def from_json_obj(cls, doc: Mapping) -> "TaskInstance":
        p = doc["params"]
        params = SignalModelParams(
            reference=tuple(p["reference"]),
            alpha0=p["alpha0"],
            alpha1=p["alpha1"],
            alpha2=p["alpha2"],
            distractor={int(k): v for k, v in p.get("distractor", {}).items()},
            bias={int(k): v for k, v in p.get("bias", {}).items()},
            response_start=p.get("response_start", 1),
            vocab_size=p.get("vocab_size", 32),
        )
        return cls(
            name=doc["name"],
            prompt=tuple(doc["prompt"]),
            reference=tuple(doc["reference"]),
            params=params,
            oracle_seed=doc.get("oracle_seed", 0),
        )


def gen_signal_task(
    n_instances: int,
    length: int,
    spec: SignalTaskSpec | None = None,
    seed: int = 0,
) -> list[TaskInstance]:
    """Deterministic task set; each instance carries its reference answer."""
    spec = spec or SignalTaskSpec()
    rng = random.Random(seed)
    instances = []
    for idx in range(n_instances):
        reference = tuple(rng.randrange(2, spec.vocab_size) for _ in range(length))
        bias = {
            i: (spec.bias_adversarial if rng.random() < spec.frac_adversarial else spec.bias_normal)
            for i in range(length)
        }
        params = SignalModelParams(
            reference=reference,
            alpha0=spec.alpha0,
            alpha1=spec.alpha1,
            alpha2=spec.alpha2,
            bias=bias,
            response_start=1,
            vocab_size=spec.vocab_size,
        )
        instances.append(
            TaskInstance(
                name=f"signal-{idx:04d}",
                prompt=(1,),
                reference=reference,
                params=params,
                oracle_seed=rng.randrange(2**31),
            )
        )
    return instances


def run_task_instance(
    instance: TaskInstance, strategy: EditingStrategy, config: StrategyConfig
) -> RunResult:
    oracle = instance.build_oracle()
    return generate(list(instance.prompt), oracle, strategy, config)


# ---------------------------------------------------------------------------
# Sweep grid


@dataclass(frozen=True)
class SweepPoint:
    strategy: str
    tau: float
    c_max: int | None
    rho_max: float | None

    def to_config(self, base: StrategyConfig) -> StrategyConfig:
        overrides: dict = {}
        if self.strategy == T2T_REPLACE:
            overrides["tau_t2t"] = self.tau
        elif self.strategy == T2M_LOWPROB:
            overrides["tau_lp"] = self.tau
        elif self.strategy == T2M_T2TTRIGGER:
            overrides["tau_tr"] = self.tau
        elif self.strategy == T2M_LOGITDIFF:
            overrides["tau_ld"] = self.tau
        else:
            raise ValidationError(f"strategy {self.strategy!r} not part of the sweep grid")
        if self.c_max is not None:
            overrides["c_max"] = self.c_max
        if self.rho_max is not None:
            overrides["rho_max"] = self.rho_max
        return base.with_overrides(**overrides)


@dataclass(frozen=True)
class SweepGrid:
    lowprob_taus: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    trigger_taus: tuple[float, ...] = (0.5, 0.7, 0.9)
    logitdiff_taus: tuple[float, ...] = (0.1, 0.2, 0.3, 0.5)
    c_maxes: tuple[int, ...] = (1, 3, 5)
    rho_maxes: tuple[float, ...] = (0.25, 0.5, 1.0)
    baseline_tau: float = 0.5

    def points(self) -> list[SweepPoint]:
        """Baseline first, then the full detector x tau x c_max x rho cross."""
        pts = [SweepPoint(strategy=T2T_REPLACE, tau=self.baseline_tau, c_max=None, rho_max=None)]
        per_strategy = (
            (T2M_LOWPROB, self.lowprob_taus),
            (T2M_T2TTRIGGER, self.trigger_taus),
            (T2M_LOGITDIFF, self.logitdiff_taus),
        )
        for strategy, taus in per_strategy:
            for tau in taus:
                for c_max in self.c_maxes:
                    for rho_max in self.rho_maxes:
                        pts.append(SweepPoint(strategy=strategy, tau=tau, c_max=c_max, rho_max=rho_max))
        return pts

    def size(self) -> int:
        return len(self.points())


@dataclass
class SweepRow:
    point: SweepPoint
    accuracy: float | None
    avg_remasks: float | None
    avg_edits: float | None
    avg_inner_iters: float | None
    failed: bool = False

    def csv_cells(self) -> list[str]:
        def num(x: float | None, fmt: str) -> str:
            return "" if x is None else format(x, fmt)

        return [
            self.point.strategy,
            format(self.point.tau, "g"),
            "" if self.point.c_max is None else str(self.point.c_max),
            "" if self.point.rho_max is None else format(self.point.rho_max, "g"),
            num(self.accuracy, ".4f"),
            num(self.avg_remasks, ".4f"),
            num(self.avg_edits, ".4f"),
            num(self.avg_inner_iters, ".4f"),
        ]


def _run_point(
    point: SweepPoint, tasks: Sequence[TaskInstance], base: StrategyConfig
) -> SweepRow:
    config = point.to_config(base)
    strategy = EditingStrategy(point.strategy)
    correct = 0
    remasks = edits = iters = 0
    try:
        for instance in tasks:
            result = run_task_instance(instance, strategy, config)
            if list(result.answer_tokens) == list(instance.reference):
                correct += 1
            remasks += result.remasks
            edits += result.edits
            iters += result.inner_iters
    except GenerationAborted:
        return SweepRow(
            point=point, accuracy=None, avg_remasks=None, avg_edits=None, avg_inner_iters=None,
            failed=True,
        )
    n = len(tasks)
    return SweepRow(
        point=point,
        accuracy=correct / n,
        avg_remasks=remasks / n,
        avg_edits=edits / n,
        avg_inner_iters=iters / n,
    )


def sweep(
    tasks: Sequence[TaskInstance],
    grid: SweepGrid | None = None,
    base_config: StrategyConfig | None = None,
    parallelism: int = 1,
    config_overrides: Mapping | None = None,
) -> list[SweepRow]:
    """Run the full grid over the task set; rows come back in grid order.

    The base configuration defaults to the task geometry (block length and
    budget sized to the reference); ``config_overrides`` lay on top of it,
    so overriding e.g. the seed never discards the task-derived fields.
    """
    if not tasks:
        raise ValidationError("sweep needs a non-empty task set")
    grid = grid or SweepGrid()
    if base_config is None:
        length = max(len(t.reference) for t in tasks)
        base_config = StrategyConfig(block_len=length, max_new_tokens=length)
    if config_overrides:
        base_config = base_config.with_overrides(**config_overrides)
    points = grid.points()
    if parallelism <= 1:
        return [_run_point(p, tasks, base_config) for p in points]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(_run_point, p, tasks, base_config) for p in points]
        return [f.result() for f in futures]


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_cells())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Oracle resolution shared by the CLI and the service


def build_oracle(
    scenario: Mapping | None = None,
    scenario_path: str | None = None,
    oracle_url: str | None = None,
) -> Oracle:
    """Resolve the oracle for a run: remote when a URL is given, otherwise
    the in-process tabular oracle for the scenario document."""
    if oracle_url:
        return RemoteOracle(oracle_url)
    if scenario is not None:
        return TabularOracle(parse_scenario(scenario))
    if scenario_path is not None:
        return load_scenario(scenario_path)
    raise ValidationError("no oracle specified: need a scenario or an oracle URL")
