"""Pydantic request/response models for the reference-case-search service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class TilePoint(BaseModel):
    x: int = Field(ge=0)
    y: int = Field(ge=0)


class QueryRequest(BaseModel):
    slide_id: str
    roi: list[TilePoint] = Field(min_length=1)
    k: int = Field(default=5, ge=1)
    top_n: int = Field(default=10, ge=1)


class QueryCreated(BaseModel):
    query_id: str


class HealthResponse(BaseModel):
    status: str
    slides: int


class SlideSummary(BaseModel):
    slide_id: str
    diagnosis: str | None
    tissue_type: str
    staining: str
    staining_category: str
    lab: str
    in_store: bool


class SlideMeta(SlideSummary):
    case_id: str
    scanner: str
    prep: str
    mpp: float
    width: int
    height: int
    tile_size: int
    tiles: list[TilePoint]


class ResultEntry(BaseModel):
    rank: int
    slide_id: str
    score: float
    diagnosis: str | None


class QueryResult(BaseModel):
    query_id: str
    status: str
    slide_id: str
    k: int
    top_n: int
    results: list[ResultEntry]


class HeatmapResponse(BaseModel):
    slide_id: str
    tile_size: int
    nx: int
    ny: int
    values: list[list[float | None]]
