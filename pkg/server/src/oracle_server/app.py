"""FastAPI application serving the block-scoring protocol.

Two modes share one wire surface.  Scripted mode (the default) loads a
scenario document once and answers deterministically from it; responses
depend only on the request body and the loaded spec.  Model mode plugs in
an adapter object wrapping a real denoiser; the adapter owns tokenizer
facts and scoring, the app owns the protocol.

Protocol errors return 400 with ``{"error": reason}``; unexpected failures
return 500 with the same shape.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Protocol, Sequence

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from oracle_server.models import MetaResponse, ScoreRequest, ScoreResponse
from oracle_server.scenario import RequestError, ScenarioDoc, load_spec, score


class ScoringAdapter(Protocol):
    """What model mode must provide."""

    def meta(self) -> dict: ...

    def score(
        self,
        tokens: Sequence[int | None],
        block: tuple[int, int],
        current: Mapping[int, int],
        k: int,
    ) -> list[dict]: ...


class ScriptedBackend:
    mode = "scripted"

    def __init__(self, spec: ScenarioDoc):
        self.spec = spec

    def meta(self) -> dict:
        return {
            "vocab_size": self.spec.vocab_size,
            "mask_id": None,  # masks travel as null; no numeric id in scripted mode
            "eos_id": self.spec.eos_id,
            "pad_id": self.spec.pad_id,
            "mode": self.mode,
            "k": self.spec.k,
        }

    def score(self, tokens, block, current, k) -> list[dict]:
        return score(self.spec, tokens, block, current, k)


class AdapterBackend:
    mode = "model"

    def __init__(self, adapter: ScoringAdapter):
        self.adapter = adapter

    def meta(self) -> dict:
        doc = dict(self.adapter.meta())
        doc.setdefault("mode", self.mode)
        doc.setdefault("pad_id", None)
        doc.setdefault("k", 8)
        return doc

    def score(self, tokens, block, current, k) -> list[dict]:
        return self.adapter.score(tokens, block, current, k)


def create_app(
    spec_path: str | Path | None = None,
    spec_doc: Mapping | None = None,
    adapter: ScoringAdapter | None = None,
) -> FastAPI:
    if sum(x is not None for x in (spec_path, spec_doc, adapter)) != 1:
        raise ValueError("provide exactly one of spec_path, spec_doc, or adapter")
    if adapter is not None:
        backend = AdapterBackend(adapter)
    elif spec_doc is not None:
        from oracle_server.scenario import parse_spec

        backend = ScriptedBackend(parse_spec(spec_doc))
    else:
        backend = ScriptedBackend(load_spec(spec_path))

    app = FastAPI(title="scoring oracle server")

    @app.exception_handler(RequestValidationError)
    async def _malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": f"malformed request: {exc.errors()}"})

    @app.exception_handler(RequestError)
    async def _bad_request(request: Request, exc: RequestError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(Exception)
    async def _internal(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": f"{type(exc).__name__}: {exc}"})

    @app.get("/v1/meta", response_model=MetaResponse)
    def meta() -> MetaResponse:
        return MetaResponse(**backend.meta())

    @app.post("/v1/score", response_model=ScoreResponse)
    def score_endpoint(req: ScoreRequest) -> ScoreResponse:
        if req.k < 1:
            raise RequestError("k must be >= 1")
        current = {int(pos): tok for pos, tok in req.current.items()}
        positions = backend.score(req.tokens, tuple(req.block), current, req.k)
        return ScoreResponse(positions=positions)

    return app
