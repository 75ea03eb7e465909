"""The HTTP surface: four routes mapping one-to-one onto the wire protocol.

Responses carry exactly one payload key each (``candidates``, ``scores``,
``langs``); scores are clamped to [0, 1] at the boundary; model failures
surface as HTTP 500 with a JSON error body, and every model endpoint returns
503 until the bundle is loaded.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .config import ServerConfig, load_config
from .models import load_models


class ExemplarBody(BaseModel):
    src: str
    tgt: str


class TranslateBody(BaseModel):
    text: str = Field(min_length=1)
    src_lang: str
    tgt_lang: str
    exemplars: list[ExemplarBody] = []
    num_candidates: int = Field(1, ge=1)
    temperature: float = Field(1.0, ge=0.0)
    top_k: int = Field(50, ge=1)
    instruction: str | None = None
    seed: int | None = None


class PairBody(BaseModel):
    a: str
    b: str
    lang: str


class ScoreBody(BaseModel):
    pairs: list[PairBody]


class DetectBody(BaseModel):
    texts: list[str]


def create_app(config: ServerConfig | None = None, *, load: bool = True) -> FastAPI:
    """Build the service; with ``load=True`` (the default) the model bundle is
    instantiated immediately, so an unloadable configuration fails here and
    never reaches the listening socket."""
    config = config or load_config()
    app = FastAPI(title="model-server", version=__version__)
    app.state.config = config
    app.state.models = load_models(config) if load else None

    def not_ready() -> JSONResponse:
        return JSONResponse({"error": "models not loaded"}, status_code=503)

    @app.get("/health")
    def health():
        ready = app.state.models is not None
        return JSONResponse(
            {
                "status": "ok" if ready else "loading",
                "generation_model": config.generation_model,
                "metric_model": config.metric_model,
                "device": config.device,
            },
            status_code=200 if ready else 503,
        )

    @app.post("/translate")
    def translate(body: TranslateBody):
        if app.state.models is None:
            return not_ready()
        try:
            candidates = app.state.models.generator.generate(
                text=body.text,
                src_lang=body.src_lang,
                tgt_lang=body.tgt_lang,
                exemplars=[(e.src, e.tgt) for e in body.exemplars],
                num_candidates=body.num_candidates,
                temperature=body.temperature,
                top_k=body.top_k,
                seed=body.seed,
            )
            if len(candidates) != body.num_candidates:
                raise RuntimeError(
                    f"generator returned {len(candidates)} candidates, wanted {body.num_candidates}"
                )
        except Exception as exc:  # noqa: BLE001 - protocol: model errors are 5xx
            return JSONResponse({"error": str(exc)}, status_code=500)
        return {"candidates": candidates}

    @app.post("/score")
    def score(body: ScoreBody):
        if app.state.models is None:
            return not_ready()
        triples = [(p.a, p.b, p.lang) for p in body.pairs]
        scores: list[float] = []
        try:
            for start in range(0, len(triples), config.max_batch):
                chunk = triples[start : start + config.max_batch]
                scores.extend(app.state.models.metric.score_batch(chunk))
        except Exception as exc:  # noqa: BLE001
            return JSONResponse({"error": str(exc)}, status_code=500)
        return {"scores": [min(1.0, max(0.0, float(s))) for s in scores]}

    @app.post("/detect")
    def detect(body: DetectBody):
        if app.state.models is None:
            return not_ready()
        try:
            langs = app.state.models.detector.detect(list(body.texts))
        except Exception as exc:  # noqa: BLE001
            return JSONResponse({"error": str(exc)}, status_code=500)
        return {"langs": langs}

    return app
