"""HTTP classification service with live exemplar upserts.

Requests read whichever classifier snapshot is current when they start;
upserts build a new snapshot under a writer lock and publish it with one
attribute assignment, so classify never waits on an upsert.
"""

from __future__ import annotations

import asyncio
import hmac
import json
import logging
import os
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .config import AppConfig, ServiceConfig
from .errors import (
    CatalogError,
    ConfigError,
    IntentPathError,
    NoCandidatesError,
    ProviderError,
)
from .pipeline import IntentClassifier, classifier_from_index
from .retrieval import load_index, save_index
from .retrieval.ingest import append_exemplar, parse_record
from .textproc import normalize

logger = logging.getLogger(__name__)


class ServiceState:
    """Current classifier snapshot plus the serialized write path."""

    def __init__(self, classifier: IntentClassifier, config: ServiceConfig = ServiceConfig()):
        self._classifier = classifier
        self.config = config
        self._write_lock = threading.Lock()
        self.version = 0

    @property
    def classifier(self) -> IntentClassifier:
        return self._classifier

    def upsert(self, record: dict) -> dict:
        with self._write_lock:
            clf = self._classifier
            pair = parse_record(record, None)
            catalog = clf.catalog.with_intent(pair.intent) if clf.catalog is not None else None
            retriever = clf.retriever.upsert(pair, catalog)
            if self.config.write_ahead_log:
                append_exemplar(self.config.write_ahead_log, pair)
            self._classifier = IntentClassifier(retriever, clf.provider, catalog, clf.config, clf.template)
            self.version += 1
            return {"ok": True, "id": pair.id, "index_size": len(retriever), "version": self.version}

    def snapshot(self, path: str | Path) -> dict:
        with self._write_lock:
            index = self._classifier.retriever.index
            save_index(index, path)
            return {"ok": True, "path": str(path), "index_size": len(index), "version": self.version}


class _RequestError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


async def _json_object(request: Request) -> dict:
    raw = await request.body()
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise _RequestError(400, f"malformed JSON body: {exc}") from None
    if not isinstance(doc, dict):
        raise _RequestError(400, "request body must be a JSON object")
    return doc


def _classify_args(doc: dict) -> tuple[str, str | None, int | None, bool]:
    extra = set(doc) - {"query", "vertical", "top_k", "hierarchical"}
    if extra:
        raise _RequestError(400, f"unknown field(s) {sorted(extra)}")
    query = doc.get("query")
    if not isinstance(query, str) or not normalize(query):
        raise _RequestError(400, "query must be a non-empty string")
    vertical = doc.get("vertical")
    if vertical is not None and not isinstance(vertical, str):
        raise _RequestError(400, "vertical must be a string")
    top_k = doc.get("top_k")
    if top_k is not None and (not isinstance(top_k, int) or isinstance(top_k, bool) or top_k < 1):
        raise _RequestError(400, "top_k must be a positive integer")
    hierarchical = doc.get("hierarchical", False)
    if not isinstance(hierarchical, bool):
        raise _RequestError(400, "hierarchical must be a boolean")
    return query, vertical, top_k, hierarchical


def create_app(state: ServiceState) -> FastAPI:
    cfg = state.config
    token = None
    if cfg.auth_token_env:
        token = os.environ.get(cfg.auth_token_env)
        if not token:
            raise ConfigError(f"auth token variable {cfg.auth_token_env} is not set")
    app = FastAPI(title="ragintent", docs_url=None, redoc_url=None)
    app.state.service = state
    gate = asyncio.Semaphore(cfg.max_concurrency)

    @app.exception_handler(_RequestError)
    async def _request_error(request: Request, exc: _RequestError):
        return JSONResponse({"error": exc.message}, status_code=exc.status)

    def authorize(request: Request) -> None:
        if token is None:
            return
        header = request.headers.get("authorization", "")
        scheme, _, given = header.partition(" ")
        if scheme.lower() != "bearer" or not hmac.compare_digest(given.strip(), token):
            raise _RequestError(401, "missing or invalid bearer token")

    async def bounded(fn, *args):
        try:
            await asyncio.wait_for(gate.acquire(), cfg.request_timeout)
        except asyncio.TimeoutError:
            raise _RequestError(503, "service busy") from None
        try:
            return await asyncio.wait_for(run_in_threadpool(fn, *args), cfg.request_timeout)
        except asyncio.TimeoutError:
            raise _RequestError(503, f"request exceeded {cfg.request_timeout}s") from None
        finally:
            gate.release()

    @app.post("/classify")
    async def classify(request: Request):
        authorize(request)
        query, vertical, top_k, hierarchical = _classify_args(await _json_object(request))
        clf = state.classifier
        if vertical is not None and clf.catalog is not None and vertical not in clf.catalog.verticals:
            raise _RequestError(422, f"unknown vertical {vertical!r}")

        def run():
            if hierarchical:
                return {"levels": [p.to_dict() for p in clf.classify_hierarchical(query, vertical, top_k)]}
            return clf.classify(query, vertical, top_k).to_dict()

        try:
            return await bounded(run)
        except NoCandidatesError as exc:
            raise _RequestError(503, str(exc)) from None
        except ProviderError as exc:
            raise _RequestError(503, f"provider unavailable: {exc}") from None

    @app.post("/index/upsert")
    async def upsert(request: Request):
        authorize(request)
        doc = await _json_object(request)
        try:
            return await run_in_threadpool(state.upsert, doc)
        except (CatalogError, IntentPathError) as exc:
            raise _RequestError(422, str(exc)) from None
        except (ValueError, TypeError, KeyError) as exc:
            raise _RequestError(400, str(exc)) from None

    @app.post("/index/snapshot")
    async def snapshot(request: Request):
        authorize(request)
        raw = await request.body()
        doc = await _json_object(request) if raw.strip() else {}
        path = doc.get("path") or cfg.snapshot_path
        if not isinstance(path, str) or not path:
            raise _RequestError(400, "no snapshot path given or configured")
        return await run_in_threadpool(state.snapshot, path)

    @app.get("/healthz")
    async def healthz():
        clf = state.classifier
        index = clf.retriever.index
        return {
            "status": "ok",
            "retriever": clf.retriever.kind,
            "index_size": len(index),
            "fingerprint": getattr(index, "fingerprint", None),
            "version": state.version,
        }

    return app


def app_from_config(cfg: AppConfig) -> FastAPI:
    if not cfg.index:
        raise ConfigError("serve needs an index path")
    classifier = classifier_from_index(load_index(cfg.index), cfg.pipeline)
    return create_app(ServiceState(classifier, cfg.service))


def serve(cfg: AppConfig) -> None:
    import uvicorn

    app = app_from_config(cfg)
    uvicorn.run(app, host=cfg.service.host, port=cfg.service.port, log_level="info")
