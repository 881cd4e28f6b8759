"""HTTP service exposing the feature-provider contract.

POST /embed/finance  {"texts": [...]} -> {"vectors": [[...]]}
POST /embed/general  {"texts": [...]} -> {"vectors": [[...]]}
POST /sentiment      {"texts": [...]} -> {"scores": [...]}
GET  /health         -> {"status": "ok", "dims": {"finance": D, "general": D}}

Responses preserve request order. Malformed bodies get 422 (framework
validation), oversize batches 413, and every inference route answers 503
until the bundle's weights are ready.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .bundles import FeatureBundle, SidecarConfig, TransformersBundle, build_bundle


class EmbedRequest(BaseModel):
    texts: list[str]


def create_app(config: SidecarConfig | None = None, bundle: FeatureBundle | None = None) -> FastAPI:
    config = config or SidecarConfig.from_env()
    bundle = bundle or build_bundle(config)
    app = FastAPI(title="creditxai embedding sidecar")
    app.state.bundle = bundle
    app.state.config = config

    if isinstance(bundle, TransformersBundle):
        bundle.start_background_load()

    def _guard(request: EmbedRequest) -> list[str]:
        if not bundle.ready():
            detail = "models loading"
            if isinstance(bundle, TransformersBundle) and bundle.load_error:
                detail = f"models unavailable: {bundle.load_error}"
            raise HTTPException(status_code=503, detail=detail)
        if len(request.texts) > config.batch_max:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.texts)} exceeds batch_max {config.batch_max}",
            )
        return request.texts

    @app.get("/health")
    def health():
        if not bundle.ready():
            raise HTTPException(status_code=503, detail="models loading")
        return {"status": "ok", "dims": bundle.dims()}

    @app.post("/embed/finance")
    def embed_finance(request: EmbedRequest):
        return {"vectors": bundle.embed_finance(_guard(request))}

    @app.post("/embed/general")
    def embed_general(request: EmbedRequest):
        return {"vectors": bundle.embed_general(_guard(request))}

    @app.post("/sentiment")
    def sentiment(request: EmbedRequest):
        return {"scores": bundle.sentiment(_guard(request))}

    return app
