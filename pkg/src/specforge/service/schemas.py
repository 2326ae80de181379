"""Pydantic request/response models for the assistant service wire protocol."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field

WIRE_VERSION = 1


class SelectionSpan(BaseModel):
    start_line: int = Field(ge=1)
    end_line: int = Field(ge=1)


class SubmitParams(BaseModel):
    kind: Literal["generate", "repair", "minimize"]
    program_text: str
    selection_span: SelectionSpan | None = None
    config_overrides: dict[str, Any] = Field(default_factory=dict)


class EventsParams(BaseModel):
    job_id: str
    since: int = 0


class CancelParams(BaseModel):
    job_id: str


class RpcRequest(BaseModel):
    version: int
    id: str | int
    method: Literal["submit", "events", "cancel", "config"]
    params: dict[str, Any] = Field(default_factory=dict)


class RpcError(BaseModel):
    code: str
    message: str


class RpcResponse(BaseModel):
    id: str | int
    ok: bool
    payload: dict[str, Any] | None = None
    error: RpcError | None = None


class EventModel(BaseModel):
    ordinal: int
    attempt_index: int
    phase: Literal["prompting", "verifying", "minimizing"]
    summary: str
    obligations_verified: int = 0
    obligations_failed: int = 0


class SubmitResponse(BaseModel):
    job_id: str


class EventsResponse(BaseModel):
    state: Literal["queued", "running", "done", "failed", "cancelled"]
    events: list[EventModel]
    result: dict[str, Any] | None = None
    error: str | None = None


class ConfigResponse(BaseModel):
    wire_version: int
    providers: list[str]
    verifier_executable: str
    max_concurrent_jobs: int
    retry_limit: int
