"""FastAPI application exposing generate/repair/minimize as async jobs.

Two equivalent surfaces: a JSON-RPC style envelope at POST /v1/rpc (the wire
protocol editor clients speak; schema in wire_schema.json) and plain REST
routes for convenience. Both drive the same JobManager.
"""

from __future__ import annotations

from typing import Callable

from fastapi import FastAPI, HTTPException
from pydantic import ValidationError

from ..config import AppConfig
from ..gateway import Provider, ProviderConfig, build_provider
from .jobs import BadRequest, JobManager, UnknownJob
from .schemas import (
    WIRE_VERSION,
    CancelParams,
    ConfigResponse,
    EventModel,
    EventsParams,
    EventsResponse,
    RpcError,
    RpcRequest,
    RpcResponse,
    SubmitParams,
    SubmitResponse,
)


def create_app(
    config: AppConfig | None = None,
    make_provider: Callable[[ProviderConfig], Provider] = build_provider,
) -> FastAPI:
    config = config or AppConfig()
    app = FastAPI(title="specforge assistant service", version="1")
    manager = JobManager(config, make_provider=make_provider)
    app.state.manager = manager
    app.state.config = config

    def submit(params: SubmitParams) -> dict:
        span = None
        if params.selection_span is not None:
            span = (params.selection_span.start_line, params.selection_span.end_line)
        job_id = manager.submit(params.kind, params.program_text, span, params.config_overrides)
        return {"job_id": job_id}

    def events(params: EventsParams) -> dict:
        evs, state = manager.events(params.job_id, params.since)
        job = manager.get(params.job_id)
        return EventsResponse(
            state=state,
            events=[EventModel(**e.to_dict()) for e in evs],
            result=job.result if state == "done" else None,
            error=job.error,
        ).model_dump()

    def cancel(params: CancelParams) -> dict:
        return {"state": manager.cancel(params.job_id)}

    def config_payload() -> dict:
        return ConfigResponse(
            wire_version=WIRE_VERSION,
            providers=[p.name for p in config.providers],
            verifier_executable=config.verifier.executable,
            max_concurrent_jobs=config.service.max_concurrent_jobs,
            retry_limit=config.service.retry_limit,
        ).model_dump()

    @app.post("/v1/rpc", response_model=RpcResponse, response_model_exclude_none=True)
    def rpc(request: RpcRequest) -> RpcResponse:
        if request.version != WIRE_VERSION:
            return RpcResponse(
                id=request.id,
                ok=False,
                error=RpcError(code="BadVersion", message=f"expected version {WIRE_VERSION}"),
            )
        try:
            if request.method == "submit":
                payload = submit(SubmitParams(**request.params))
            elif request.method == "events":
                payload = events(EventsParams(**request.params))
            elif request.method == "cancel":
                payload = cancel(CancelParams(**request.params))
            else:
                payload = config_payload()
            return RpcResponse(id=request.id, ok=True, payload=payload)
        except ValidationError as exc:
            return RpcResponse(
                id=request.id, ok=False, error=RpcError(code="BadRequest", message=str(exc))
            )
        except BadRequest as exc:
            return RpcResponse(
                id=request.id, ok=False, error=RpcError(code="BadRequest", message=str(exc))
            )
        except UnknownJob as exc:
            return RpcResponse(
                id=request.id, ok=False, error=RpcError(code="UnknownJob", message=str(exc))
            )

    @app.post("/v1/jobs", response_model=SubmitResponse)
    def rest_submit(params: SubmitParams) -> SubmitResponse:
        try:
            return SubmitResponse(**submit(params))
        except BadRequest as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/v1/jobs/{job_id}/events", response_model=EventsResponse)
    def rest_events(job_id: str, since: int = 0) -> EventsResponse:
        try:
            return EventsResponse(**events(EventsParams(job_id=job_id, since=since)))
        except UnknownJob:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")

    @app.post("/v1/jobs/{job_id}/cancel")
    def rest_cancel(job_id: str) -> dict:
        try:
            return cancel(CancelParams(job_id=job_id))
        except UnknownJob:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")

    @app.get("/v1/config", response_model=ConfigResponse)
    def rest_config() -> ConfigResponse:
        return ConfigResponse(**config_payload())

    @app.get("/v1/health")
    def health() -> dict:
        return {"ok": True, "wire_version": WIRE_VERSION}

    return app
