"""Pydantic request/response models for the linking service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class CandidateOut(BaseModel):
    cui: str
    distance: float
    names: list[str] = []


class ComponentOut(BaseModel):
    text: str
    nil: bool
    candidates: list[CandidateOut]


class LinkRequest(BaseModel):
    text: str = Field(..., min_length=1, description="Raw mention text; normalized server-side")
    k: int = Field(5, ge=1, le=1000)
    gate: bool = Field(True, description="Apply the nil threshold when one is loaded")


class LinkResponse(BaseModel):
    text: str
    normalized: str
    components: list[ComponentOut]


class BatchLinkRequest(BaseModel):
    texts: list[str] = Field(..., min_length=1, max_length=10_000)
    k: int = Field(5, ge=1, le=1000)
    gate: bool = True


class BatchLinkResponse(BaseModel):
    results: list[LinkResponse]


class HealthResponse(BaseModel):
    status: str


class InfoResponse(BaseModel):
    names: int
    concepts: int
    dim: int
    distance: str
    fingerprint: str
    threshold: float | None
    threshold_strategy: str | None


class ErrorResponse(BaseModel):
    detail: str
