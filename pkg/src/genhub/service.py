"""Local HTTP facade over the hub.

Endpoints (JSON over HTTP/1.1):

    GET  /v1/models                      list model ids
    GET  /v1/models/{id}                 full metadata document
    POST /v1/search                      {values, operator}
    POST /v1/rank                        {metric, order, ids?}
    POST /v1/models/{id}/generate        sync <= 64 samples, else job
    POST /v1/models/{id}/explore         one latent-driven sample, base64
    GET  /v1/jobs/{id}                   poll async generation
    GET  /                               static explorer UI

Large generations run as jobs so the HTTP connection is never held open
for minutes. Every module error maps onto one stable error code.
"""

from __future__ import annotations

import base64
import logging
import os
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import BadQueryError, GenHubError
from .executor import GenerateResult
from .hub import Hub

logger = logging.getLogger(__name__)

PORT_ENV = "GENHUB_PORT"
UI_DIR_ENV = "GENHUB_UI_DIR"
DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8490

ASYNC_THRESHOLD = 64

_STATUS_BY_CODE = {
    "unknown_model": 404,
    "bad_query": 400,
    "validation": 400,
    "protocol_violation": 502,
    "checksum_mismatch": 502,
    "timeout": 504,
    "internal": 500,
}


@dataclass
class ServiceConfig:
    registry_source: str | Path | None = None
    host: str = DEFAULT_HOST
    port: int | None = None
    cache_root: str | Path | None = None
    ui_dir: str | Path | None = None

    def resolved_port(self) -> int:
        if self.port is not None:
            return self.port
        raw = os.environ.get(PORT_ENV)
        if raw:
            try:
                return int(raw)
            except ValueError:
                pass
        return DEFAULT_PORT


class SearchBody(BaseModel):
    values: list[str]
    operator: str = "OR"


class RankBody(BaseModel):
    metric: str
    order: str = "ascending"
    ids: list[str] | None = None


class GenerateBody(BaseModel):
    num_samples: int = 1
    seed: int | None = None
    output_path: str | None = None
    save_images: bool = True
    chunk_size: int | None = None
    kwargs: dict[str, Any] = Field(default_factory=dict)


class ExploreBody(BaseModel):
    latent_vector: list[float]
    condition: str | None = None
    seed: int | None = None


@dataclass
class Job:
    job_id: str
    model_id: str
    state: str = "queued"  # queued | running | done | failed
    result: dict | None = None
    error: dict | None = None


class JobRegistry:
    def __init__(self):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def create(self, model_id: str) -> Job:
        job = Job(job_id=uuid.uuid4().hex[:12], model_id=model_id)
        with self._lock:
            self._jobs[job.job_id] = job
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def update(self, job_id: str, **changes) -> None:
        with self._lock:
            job = self._jobs[job_id]
            for key, value in changes.items():
                setattr(job, key, value)


def _error_payload(exc: GenHubError) -> dict:
    return {"error": {"code": exc.code, "message": exc.message, "detail": exc.detail}}


def _result_to_dict(result: GenerateResult) -> dict:
    records = []
    for record in result.records:
        entry: dict[str, Any] = {
            "index": record.index,
            "chunk_index": record.chunk_index,
            "seed_used": record.seed_used,
        }
        if record.files is not None:
            entry["files"] = {kind: str(path) for kind, path in record.files.items()}
        if record.payloads is not None:
            entry["payloads_b64"] = {
                kind: base64.b64encode(data).decode("ascii") for kind, data in record.payloads.items()
            }
        records.append(entry)
    return {
        "records": records,
        "num_samples": len(records),
        "wall_time_ms": result.wall_time_ms,
        "output_path": str(result.output_path) if result.output_path else None,
    }


_BUILTIN_INDEX_PAGE = """<!doctype html>
<html><head><title>genhub</title></head>
<body>
<h1>genhub service</h1>
<p>No explorer UI bundle found. Build the frontend (see README) or set
GENHUB_UI_DIR, then reload. The JSON API lives under <code>/v1/</code>.</p>
</body></html>
"""


def resolve_ui_dir(explicit: str | Path | None = None) -> Path | None:
    candidates = []
    if explicit:
        candidates.append(Path(explicit))
    env = os.environ.get(UI_DIR_ENV)
    if env:
        candidates.append(Path(env))
    candidates.append(Path.cwd() / "frontend" / "dist")
    candidates.append(Path(__file__).resolve().parents[2] / "frontend" / "dist")
    for candidate in candidates:
        if candidate.is_dir() and (candidate / "index.html").is_file():
            return candidate
    return None


def create_app(hub: Hub, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="genhub", version="0.1.0")
    jobs = JobRegistry()

    @app.exception_handler(GenHubError)
    async def handle_hub_error(_request: Request, exc: GenHubError):
        return JSONResponse(status_code=_STATUS_BY_CODE.get(exc.code, 500), content=_error_payload(exc))

    @app.get("/v1/models")
    def list_models():
        return {"model_ids": hub.model_ids(), "count": len(hub.index)}

    @app.get("/v1/models/{model_id}")
    def model_metadata(model_id: str):
        meta = hub.get_metadata(model_id)
        payload = {"model_id": model_id}
        payload.update(meta.to_dict())
        return payload

    @app.post("/v1/search")
    def search(body: SearchBody):
        candidates = hub.find_models(body.values, body.operator)
        return {
            "model_ids": candidates.ids(),
            "operator": candidates.query.operator,
            "values": list(candidates.query.values),
            "entries": [
                {
                    "model_id": entry.model_id,
                    "matched_values": list(entry.matched_values),
                    "hit_paths": list(entry.hit_paths),
                }
                for entry in candidates.entries
            ],
        }

    @app.post("/v1/rank")
    def rank(body: RankBody):
        ranked = hub.rank_models(body.metric, body.order, body.ids)
        return {
            "metric": ranked.metric_path,
            "order": ranked.order,
            "items": [{"model_id": model_id, "value": value} for model_id, value in ranked.items],
            "missing": list(ranked.missing),
        }

    @app.post("/v1/models/{model_id}/generate")
    def generate(model_id: str, body: GenerateBody):
        def run() -> dict:
            result = hub.generate(
                model_id,
                num_samples=body.num_samples,
                output_path=body.output_path,
                save_images=body.save_images,
                seed=body.seed,
                chunk_size=body.chunk_size,
                **body.kwargs,
            )
            return _result_to_dict(result)

        if body.num_samples <= ASYNC_THRESHOLD:
            payload = run()
            payload["status"] = "done"
            return payload

        job = jobs.create(model_id)

        def worker():
            jobs.update(job.job_id, state="running")
            try:
                jobs.update(job.job_id, state="done", result=run())
            except GenHubError as exc:
                jobs.update(job.job_id, state="failed", error=_error_payload(exc)["error"])
            except Exception as exc:  # noqa: BLE001 - job must record any failure
                jobs.update(job.job_id, state="failed", error={"code": "internal", "message": str(exc)})

        threading.Thread(target=worker, name=f"genhub-job-{job.job_id}").start()
        return JSONResponse(status_code=202, content={"job_id": job.job_id, "state": job.state})

    @app.get("/v1/jobs/{job_id}")
    def job_state(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise BadQueryError(f"unknown job {job_id!r}")
        payload: dict[str, Any] = {"job_id": job.job_id, "model_id": job.model_id, "state": job.state}
        if job.result is not None:
            payload["result"] = job.result
        if job.error is not None:
            payload["error"] = job.error
        return payload

    @app.post("/v1/models/{model_id}/explore")
    def explore(model_id: str, body: ExploreBody):
        handle = hub.init_executor(model_id)
        latent_dim = handle.manifest.latent_dim
        if not latent_dim:
            raise BadQueryError(f"model {model_id} is not explorable (no latent_dim)")
        if len(body.latent_vector) != latent_dim:
            raise BadQueryError(
                f"latent_vector has length {len(body.latent_vector)}, expected latent_dim {latent_dim}"
            )
        kwargs: dict[str, Any] = {"input_latent_vector": body.latent_vector}
        if body.condition is not None and handle.manifest.condition is not None:
            kwargs[handle.manifest.condition.name] = body.condition
        result = hub.generate(model_id, num_samples=1, save_images=False, seed=body.seed, **kwargs)
        record = result.records[0]
        return {
            "model_id": model_id,
            "outputs": {
                kind: base64.b64encode(data).decode("ascii")
                for kind, data in (record.payloads or {}).items()
            },
            "seed_used": record.seed_used,
            "latent_echo": body.latent_vector,
        }

    static_dir = resolve_ui_dir(ui_dir)
    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
        logger.info("serving explorer UI from %s", static_dir)
    else:

        @app.get("/", response_class=HTMLResponse)
        def index_page():
            return _BUILTIN_INDEX_PAGE

    return app


def serve(config: ServiceConfig, hub: Hub | None = None) -> None:
    """Run the service until interrupted; in-flight requests finish on shutdown."""
    import uvicorn

    hub = hub or Hub(config.registry_source, cache_root=config.cache_root)
    hub.index  # fail fast on an unloadable registry
    app = create_app(hub, ui_dir=config.ui_dir)
    uvicorn.run(app, host=config.host, port=config.resolved_port(), log_level="info")
