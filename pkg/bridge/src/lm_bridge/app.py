"""HTTP surface of the bridge.

Three routes, matching what RemoteScorer speaks on the engine side:

    POST /tokenize  {"text": ...}                      -> {"ids": [...]}
    POST /logprobs  {"context_ids": [...],
                     "target_ids": [...]}              -> {"token_logprobs": [...]}
    GET  /health                                       -> model metadata

Scoring calls are serialized behind a lock; the backend is a single
model instance and concurrent forward passes buy nothing on CPU.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .adapters import load_adapters
from .backends import build_backend
from .config import BridgeConfig


class TokenizeIn(BaseModel):
    text: str


class LogprobsIn(BaseModel):
    context_ids: list[int]
    target_ids: list[int]


def create_app(cfg: BridgeConfig) -> FastAPI:
    backend = build_backend(cfg.model, cfg.device)
    adapter_id = load_adapters(backend.module, cfg.adapters) if cfg.adapters else None
    lock = threading.Lock()
    app = FastAPI(title="lm-bridge", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def _validation(request: Request, exc: RequestValidationError) -> JSONResponse:
        # Unparseable bodies are the client's framing bug (400); parseable
        # JSON with wrong fields is a schema violation (422).
        errors = exc.errors()
        malformed = any(str(e.get("type", "")).startswith("json") for e in errors)
        detail = [
            {"loc": list(e.get("loc", ())), "msg": str(e.get("msg", "")), "type": str(e.get("type", ""))}
            for e in errors
        ]
        return JSONResponse(status_code=400 if malformed else 422, content={"detail": detail})

    @app.post("/tokenize")
    def tokenize(body: TokenizeIn) -> dict:
        return {"ids": backend.tokenize(body.text)}

    @app.post("/logprobs")
    def logprobs(body: LogprobsIn) -> dict:
        total = len(body.context_ids) + len(body.target_ids)
        if total > cfg.max_len:
            raise HTTPException(
                status_code=422,
                detail=f"request holds {total} ids, max_len is {cfg.max_len}",
            )
        for ident in (*body.context_ids, *body.target_ids):
            if not 0 <= ident < backend.vocab_size:
                raise HTTPException(
                    status_code=422,
                    detail=f"token id {ident} outside vocabulary of {backend.vocab_size}",
                )
        with lock:
            scores = backend.logprobs(body.context_ids, body.target_ids)
        return {"token_logprobs": scores}

    @app.get("/health")
    def health() -> dict:
        return {
            "model": cfg.model,
            "vocab_size": backend.vocab_size,
            "max_len": cfg.max_len,
            "adapters": adapter_id,
            "device": cfg.device,
            "bos": "empty-context-only",
        }

    return app
