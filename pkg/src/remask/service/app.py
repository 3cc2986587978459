"""FastAPI application wrapping the decoding engine.

The service is stateless: every request carries its own scenario/task
payload and configuration, builds fresh generation state, and returns the
full result.  Validation failures map to 400, oracle failures to 502, and
contract violations to 500.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from remask import __version__
from remask.analysis import (
    ContextQualityInput,
    StuckParams,
    audit_trajectory,
    context_quality,
    imperfect_detector_quality,
    trajectory_diff,
    verify_prop_stuck,
)
from remask.engine import EditingStrategy, GenerationAborted, generate
from remask.harness import (
    ScenarioReport,
    SignalTaskSpec,
    SweepGrid,
    TaskInstance,
    build_oracle,
    gen_signal_task,
    run_scenario,
    sweep,
    sweep_csv,
)
from remask.oracle import OracleError
from remask.service import models as m
from remask.types import (
    BlockPosterior,
    ContractViolationError,
    PosteriorEntry,
    StrategyConfig,
    TrajectoryEvent,
    ValidationError,
)


def _events_out(events) -> list[m.EventModel]:
    return [m.EventModel(**e.to_json_obj()) for e in events]


def _events_in(events: list[m.EventModel]) -> list[TrajectoryEvent]:
    return [TrajectoryEvent.from_json_obj(e.model_dump()) for e in events]


def _config(model: m.ConfigModel) -> StrategyConfig:
    return StrategyConfig(**model.overrides())


def create_app() -> FastAPI:
    app = FastAPI(title="remask engine", version=__version__)

    @app.exception_handler(ValidationError)
    async def _validation(request, exc: ValidationError):
        raise HTTPException(status_code=400, detail=str(exc))

    @app.exception_handler(OracleError)
    async def _oracle(request, exc: OracleError):
        raise HTTPException(status_code=502, detail=str(exc))

    @app.exception_handler(ContractViolationError)
    async def _contract(request, exc: ContractViolationError):
        raise HTTPException(status_code=500, detail=str(exc))

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/v1/generate", response_model=m.GenerateResponse)
    def generate_endpoint(req: m.GenerateRequest) -> m.GenerateResponse:
        oracle = build_oracle(
            scenario=req.oracle.scenario,
            scenario_path=req.oracle.scenario_path,
            oracle_url=req.oracle.url,
        )
        strategy = EditingStrategy(req.strategy)
        try:
            result = generate(req.prompt, oracle, strategy, _config(req.config))
        except GenerationAborted as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        return m.GenerateResponse(
            summary=m.RunSummaryModel(**result.summary()),
            events=_events_out(result.events),
            trajectory_jsonl=result.trajectory_jsonl(),
        )

    @app.post("/v1/scenario/run", response_model=m.ScenarioRunResponse)
    def scenario_run(req: m.ScenarioRunRequest) -> m.ScenarioRunResponse:
        oracle = None
        if req.oracle_url:
            oracle = build_oracle(oracle_url=req.oracle_url)
        try:
            report: ScenarioReport = run_scenario(
                req.scenario if req.scenario is not None else req.scenario_path,
                EditingStrategy(req.strategy),
                config_overrides=req.config.overrides(),
                oracle=oracle,
            )
        except GenerationAborted as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        return m.ScenarioRunResponse(
            summary=report.summary(),
            events=_events_out(report.result.events),
            trajectory_jsonl=report.result.trajectory_jsonl(),
            expected=report.expected,
            matched=report.matched,
        )

    @app.post("/v1/tasks/signal", response_model=m.GenTaskResponse)
    def tasks_signal(req: m.GenTaskRequest) -> m.GenTaskResponse:
        spec = SignalTaskSpec(**req.spec.model_dump())
        tasks = gen_signal_task(req.n_instances, req.length, spec, seed=req.seed)
        return m.GenTaskResponse(tasks=[t.to_json_obj() for t in tasks])

    @app.post("/v1/sweep", response_model=m.SweepResponse)
    def sweep_endpoint(req: m.SweepRequest) -> m.SweepResponse:
        tasks = [TaskInstance.from_json_obj(doc) for doc in req.tasks]
        grid = SweepGrid(
            lowprob_taus=tuple(req.grid.lowprob_taus),
            trigger_taus=tuple(req.grid.trigger_taus),
            logitdiff_taus=tuple(req.grid.logitdiff_taus),
            c_maxes=tuple(req.grid.c_maxes),
            rho_maxes=tuple(req.grid.rho_maxes),
            baseline_tau=req.grid.baseline_tau,
        )
        rows = sweep(
            tasks, grid=grid, parallelism=req.parallelism, config_overrides=req.config.overrides()
        )
        return m.SweepResponse(
            rows=[
                m.SweepRowModel(
                    strategy=r.point.strategy,
                    tau=r.point.tau,
                    c_max=r.point.c_max,
                    rho_max=r.point.rho_max,
                    accuracy=r.accuracy,
                    avg_remasks=r.avg_remasks,
                    avg_edits=r.avg_edits,
                    avg_inner_iters=r.avg_inner_iters,
                    failed=r.failed,
                )
                for r in rows
            ],
            csv=sweep_csv(rows),
        )

    @app.post("/v1/analyze/context-quality", response_model=m.ContextQualityResponse)
    def analyze_context_quality(req: m.ContextQualityRequest) -> m.ContextQualityResponse:
        result = context_quality(
            ContextQualityInput(
                n_c=req.n_c, n_e=req.n_e, s_plus=req.s_plus, s_minus=req.s_minus, sigma=req.sigma
            )
        )
        return m.ContextQualityResponse(**result.to_json_obj())

    @app.post("/v1/analyze/detector-quality", response_model=m.DetectorQualityResponse)
    def analyze_detector_quality(req: m.DetectorQualityRequest) -> m.DetectorQualityResponse:
        inp = ContextQualityInput(
            n_c=req.n_c, n_e=req.n_e, s_plus=req.s_plus, s_minus=req.s_minus, sigma=0.0
        )
        points = []
        base = None
        for precision in req.precisions:
            out = imperfect_detector_quality(inp, precision, req.removed)
            base = out.base_error_rate
            points.append(
                m.DetectorQualityPoint(
                    precision=precision,
                    q_detector=out.q_detector,
                    q_random=out.q_random,
                    advantage=out.advantage,
                )
            )
        if base is None:
            raise ValidationError("precisions list must be non-empty")
        return m.DetectorQualityResponse(base_error_rate=base, points=points)

    @app.post("/v1/analyze/stuck", response_model=m.StuckCheckResponse)
    def analyze_stuck(req: m.StuckCheckRequest) -> m.StuckCheckResponse:
        if not req.entries:
            raise HTTPException(status_code=400, detail="no posterior entries given")
        positions = [e.pos for e in req.entries]
        posterior = BlockPosterior(
            block_start=min(positions),
            block_end=max(positions) + 1,
            entries={
                e.pos: PosteriorEntry(top=tuple(e.top), current_p=e.current_p) for e in req.entries
            },
            k=max(len(e.top) for e in req.entries),
        )
        report = verify_prop_stuck(
            posterior,
            dict(req.committed),
            StuckParams(epsilon=req.epsilon, tau_t2t=req.tau_t2t),
            req.tau_lp,
        )
        return m.StuckCheckResponse(**report.to_json_obj())

    @app.post("/v1/analyze/diff", response_model=m.DiffResponse)
    def analyze_diff(req: m.DiffRequest) -> m.DiffResponse:
        diff = trajectory_diff(
            _events_in(req.events_a),
            _events_in(req.events_b),
            prompt_len_a=req.prompt_len_a,
            prompt_len_b=req.prompt_len_b,
        )
        return m.DiffResponse(report=diff.to_json_obj(), table=diff.render_table())

    @app.post("/v1/analyze/audit", response_model=m.AuditResponse)
    def analyze_audit(req: m.AuditRequest) -> m.AuditResponse:
        report = audit_trajectory(
            _events_in(req.events),
            prompt_len=req.prompt_len,
            max_new_tokens=req.max_new_tokens,
            block_len=req.block_len,
            c_max=req.c_max,
            rho_max=req.rho_max,
        )
        return m.AuditResponse(report=report.to_json_obj())

    return app


app = create_app()
