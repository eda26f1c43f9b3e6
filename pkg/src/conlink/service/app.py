"""FastAPI service over a trained encoder, cached index, and optional nil gate.

Artifacts are loaded once at startup; requests only encode the incoming text
and scan the cached index, which keeps per-query latency flat.
"""

from __future__ import annotations

from dataclasses import dataclass

from fastapi import FastAPI, HTTPException

from ..corpus import make_record
from ..encoder import NGramEncoder
from ..errors import ConlinkError, FingerprintMismatch
from ..index import VectorIndex, link
from ..nilgate import NilThreshold, apply_gate, load_threshold
from .schemas import (
    BatchLinkRequest,
    BatchLinkResponse,
    CandidateOut,
    ComponentOut,
    ErrorResponse,
    HealthResponse,
    InfoResponse,
    LinkRequest,
    LinkResponse,
)


@dataclass
class ServingBundle:
    encoder: NGramEncoder
    index: VectorIndex
    threshold: NilThreshold | None = None

    def __post_init__(self):
        if self.index.fingerprint != self.encoder.fingerprint():
            raise FingerprintMismatch(
                "index was built with a different encoder; rebuild the index "
                "or serve the matching checkpoint"
            )
        self.names_by_cui: dict[str, list[str]] = {}
        for name in self.index.names:
            self.names_by_cui.setdefault(name.cui, []).append(name.surface)


def load_bundle(checkpoint_path: str, index_path: str, threshold_path: str | None = None) -> ServingBundle:
    enc = NGramEncoder.load(checkpoint_path)
    ix = VectorIndex.load(index_path)
    th = load_threshold(threshold_path) if threshold_path else None
    return ServingBundle(encoder=enc, index=ix, threshold=th)


def _link_one(bundle: ServingBundle, text: str, k: int, gate: bool) -> LinkResponse:
    try:
        record = make_record("api", text, set())
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    results = link(bundle.index, bundle.encoder, record, k)
    names_by_cui = bundle.names_by_cui
    components = []
    for comp_text, res in zip(record.components, results):
        if gate and bundle.threshold is not None:
            res = apply_gate(res, bundle.threshold)
        if res is None:
            components.append(ComponentOut(text=comp_text, nil=True, candidates=[]))
            continue
        candidates = [
            CandidateOut(cui=cui, distance=dist, names=names_by_cui.get(cui, [])[:5])
            for cui, dist in res.ranked
        ]
        components.append(ComponentOut(text=comp_text, nil=False, candidates=candidates))
    return LinkResponse(text=text, normalized=record.normalized_text, components=components)


_ERROR_RESPONSES = {
    400: {"model": ErrorResponse, "description": "Text is empty after normalization"},
    422: {"model": ErrorResponse, "description": "Request failed validation"},
}


def create_app(bundle: ServingBundle) -> FastAPI:
    app = FastAPI(
        title="conlink",
        description="Concept normalization: nearest-neighbor linking over cached name embeddings",
        version="0.1.0",
    )
    app.state.bundle = bundle

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok")

    @app.get("/info", response_model=InfoResponse)
    def info() -> InfoResponse:
        th = bundle.threshold
        return InfoResponse(
            names=len(bundle.index),
            concepts=len({n.cui for n in bundle.index.names}),
            dim=bundle.index.dim,
            distance=bundle.index.kind.value,
            fingerprint=bundle.index.fingerprint,
            threshold=th.value if th else None,
            threshold_strategy=th.strategy.value if th else None,
        )

    @app.post("/link", response_model=LinkResponse, responses=_ERROR_RESPONSES)
    def link_one(req: LinkRequest) -> LinkResponse:
        try:
            return _link_one(bundle, req.text, req.k, req.gate)
        except ConlinkError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/link/batch", response_model=BatchLinkResponse, responses=_ERROR_RESPONSES)
    def link_many(req: BatchLinkRequest) -> BatchLinkResponse:
        try:
            results = [_link_one(bundle, text, req.k, req.gate) for text in req.texts]
        except ConlinkError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return BatchLinkResponse(results=results)

    return app
