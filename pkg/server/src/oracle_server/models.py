"""Wire-protocol models.  Field names are the protocol; do not rename."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ScoreRequest(BaseModel):
    tokens: list[int | None]
    block: tuple[int, int]
    current: dict[str, int] = Field(default_factory=dict)
    k: int = 8


class TopEntry(BaseModel):
    id: int
    p: float


class PositionScores(BaseModel):
    pos: int
    top: list[TopEntry]
    current_p: float | None = None


class ScoreResponse(BaseModel):
    positions: list[PositionScores]


class MetaResponse(BaseModel):
    vocab_size: int
    mask_id: int | None
    eos_id: int | None
    pad_id: int | None
    mode: str
    k: int


class ErrorBody(BaseModel):
    error: str
