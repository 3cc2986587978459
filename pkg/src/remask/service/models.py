"""Pydantic request/response models for the engine service."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field, model_validator


class ConfigModel(BaseModel):
    """Overrides onto the engine defaults; absent fields keep defaults."""

    tau_m2t: float | None = None
    tau_t2t: float | None = None
    tau_lp: float | None = None
    tau_tr: float | None = None
    tau_ld: float | None = None
    sigma: float | None = None
    c_max: int | None = None
    rho_max: float | None = None
    n_transfer: int | None = None
    block_len: int | None = None
    max_new_tokens: int | None = None
    max_inner_iters: int | None = None
    seed: int | None = None

    def overrides(self) -> dict[str, Any]:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class OracleRef(BaseModel):
    """Where probabilities come from: an inline scenario document, a
    scenario file on the service host, or a remote scoring server."""

    scenario: dict | None = None
    scenario_path: str | None = None
    url: str | None = None

    @model_validator(mode="after")
    def _one_source(self) -> "OracleRef":
        if self.scenario is None and self.scenario_path is None and self.url is None:
            raise ValueError("oracle reference needs a scenario, a scenario_path, or a url")
        return self


class EventModel(BaseModel):
    step: int
    phase: str
    pos: int
    old: int | None
    new: int | None
    prob: float
    detector: str | None
    block_index: int


class RunSummaryModel(BaseModel):
    answer_tokens: list[int | None]
    remasks: int
    edits: int
    fills: int
    inner_iters: int
    converged: bool
    blocks: int
    prompt_len: int
    warnings: list[str] = Field(default_factory=list)


class GenerateRequest(BaseModel):
    prompt: list[int]
    strategy: str = "t2m_lowprob"
    oracle: OracleRef
    config: ConfigModel = Field(default_factory=ConfigModel)


class GenerateResponse(BaseModel):
    summary: RunSummaryModel
    events: list[EventModel]
    trajectory_jsonl: str


class ScenarioRunRequest(BaseModel):
    scenario: dict | None = None
    scenario_path: str | None = None
    strategy: str = "t2m_lowprob"
    config: ConfigModel = Field(default_factory=ConfigModel)
    oracle_url: str | None = None

    @model_validator(mode="after")
    def _has_scenario(self) -> "ScenarioRunRequest":
        if self.scenario is None and self.scenario_path is None:
            raise ValueError("need a scenario document or a scenario_path")
        return self


class ScenarioRunResponse(BaseModel):
    summary: dict
    events: list[EventModel]
    trajectory_jsonl: str
    expected: list[int] | None
    matched: bool | None


class SignalTaskSpecModel(BaseModel):
    alpha0: float = 0.0
    alpha1: float = 1.2
    alpha2: float = 3.6
    frac_adversarial: float = 0.25
    bias_adversarial: float = -2.2
    bias_normal: float = 0.9
    vocab_size: int = 32


class GenTaskRequest(BaseModel):
    n_instances: int = 20
    length: int = 8
    seed: int = 0
    spec: SignalTaskSpecModel = Field(default_factory=SignalTaskSpecModel)


class GenTaskResponse(BaseModel):
    tasks: list[dict]


class SweepGridModel(BaseModel):
    lowprob_taus: list[float] = [0.1, 0.3, 0.5, 0.7, 0.9]
    trigger_taus: list[float] = [0.5, 0.7, 0.9]
    logitdiff_taus: list[float] = [0.1, 0.2, 0.3, 0.5]
    c_maxes: list[int] = [1, 3, 5]
    rho_maxes: list[float] = [0.25, 0.5, 1.0]
    baseline_tau: float = 0.5


class SweepRequest(BaseModel):
    tasks: list[dict]
    grid: SweepGridModel = Field(default_factory=SweepGridModel)
    config: ConfigModel = Field(default_factory=ConfigModel)
    parallelism: int = 1


class SweepRowModel(BaseModel):
    strategy: str
    tau: float
    c_max: int | None
    rho_max: float | None
    accuracy: float | None
    avg_remasks: float | None
    avg_edits: float | None
    avg_inner_iters: float | None
    failed: bool


class SweepResponse(BaseModel):
    rows: list[SweepRowModel]
    csv: str


class ContextQualityRequest(BaseModel):
    n_c: int
    n_e: int
    s_plus: float
    s_minus: float
    sigma: float


class ContextQualityResponse(BaseModel):
    q_random: float
    q_targeted: float
    advantage: float


class DetectorQualityRequest(BaseModel):
    n_c: int
    n_e: int
    s_plus: float = 1.0
    s_minus: float = -1.0
    precisions: list[float]
    removed: int


class DetectorQualityPoint(BaseModel):
    precision: float
    q_detector: float
    q_random: float
    advantage: float


class DetectorQualityResponse(BaseModel):
    base_error_rate: float
    points: list[DetectorQualityPoint]


class PosteriorEntryModel(BaseModel):
    pos: int
    top: list[tuple[int, float]]
    current_p: float | None = None


class StuckCheckRequest(BaseModel):
    entries: list[PosteriorEntryModel]
    committed: dict[int, int]
    epsilon: float = 0.01
    tau_t2t: float = 0.5
    tau_lp: float = 0.3


class StuckCheckResponse(BaseModel):
    stuck_positions: list[int]
    replace_fired: list[int]
    lowprob_missed: list[int]
    passed: bool


class DiffRequest(BaseModel):
    events_a: list[EventModel]
    events_b: list[EventModel]
    prompt_len_a: int | None = None
    prompt_len_b: int | None = None


class DiffResponse(BaseModel):
    report: dict
    table: str


class AuditRequest(BaseModel):
    events: list[EventModel]
    prompt_len: int
    max_new_tokens: int
    block_len: int
    c_max: int = 1
    rho_max: float = 0.25


class AuditResponse(BaseModel):
    report: dict
