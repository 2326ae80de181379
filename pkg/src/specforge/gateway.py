"""Provider abstraction over chat-style LLM APIs.

Prompt rendering from versioned template files, sequential failover across
providers, concurrent multimodel fan-out with output arbitration, and
cost/latency accounting. Offline runs use replay providers (canned responses
keyed by request hash) or scripted providers registered by tests.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .source_model import count_loc, parse
from .strip_merge import NoCodeBlock, extract_code_block
from .verifier import Diagnostic, VerificationOutcome, VerificationStatus

log = logging.getLogger(__name__)

Message = dict  # {"role": ..., "content": ...}

BEGIN_ERRORS_TAG = "BEGIN VERIFICATION ERRORS"
END_ERRORS_TAG = "END VERIFICATION ERRORS"


class ProviderError(Exception):
    """Retriable provider failure: transport error, rate limit or timeout."""


class AllProvidersFailed(Exception):
    def __init__(self, failures: list[tuple[str, str]]):
        self.failures = failures
        summary = "; ".join(f"{name}: {reason}" for name, reason in failures)
        super().__init__(f"all providers failed ({summary})")


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    model_id: str = ""
    kind: str = "openai-chat"  # openai-chat | replay | scripted:<name>
    endpoint: str = ""
    api_key_env: str = ""
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    temperature: float = 0.5
    reasoning_effort: str | None = None  # none | low | medium | high
    cost_per_input_token: float = 0.0
    cost_per_output_token: float = 0.0
    priority: int = 1
    timeout_s: float = 120.0
    replay_dir: str = ""

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be nonnegative")


@dataclass(frozen=True)
class GenerationRequest:
    prompt_kind: str  # direct | repair
    program_text: str
    verifier_errors: str | None = None

    def __post_init__(self):
        if self.prompt_kind == "repair" and not self.verifier_errors:
            raise ValueError("repair requests must carry verifier errors")

    def messages(self) -> list[Message]:
        if self.prompt_kind == "direct":
            return render_direct_prompt(self.program_text)
        return render_repair_prompt(self.program_text, self.verifier_errors)


@dataclass
class GenerationResult:
    provider: str
    raw_text: str
    extracted_program: str | None
    input_tokens: int
    output_tokens: int
    cost: float
    latency_s: float
    provider_priority: int = 0


# ---------------------------------------------------------------------------
# Prompt rendering


def prompt_template(kind: str) -> str:
    name = {"direct": "direct_system.txt", "repair": "repair_system.txt"}[kind]
    return resources.files("specforge").joinpath(f"prompts/{name}").read_text()


def prompt_fingerprints() -> dict[str, str]:
    """sha256 of each template, pinned into reports for reproducibility."""
    return {
        kind: hashlib.sha256(prompt_template(kind).encode()).hexdigest()
        for kind in ("direct", "repair")
    }


def _wrap_program(program_text: str) -> str:
    return f"BEGIN DAFNY\n{program_text}\nEND DAFNY"


def render_direct_prompt(program_text: str) -> list[Message]:
    return [
        {"role": "system", "content": prompt_template("direct")},
        {"role": "user", "content": _wrap_program(program_text)},
    ]


def render_repair_prompt(program_text: str, errors_text: str) -> list[Message]:
    if not errors_text or not errors_text.strip():
        raise ValueError("errors_text must be nonempty for a repair prompt")
    user = (
        f"{_wrap_program(program_text)}\n\n"
        f"{BEGIN_ERRORS_TAG}\n{errors_text}\n{END_ERRORS_TAG}"
    )
    return [
        {"role": "system", "content": prompt_template("repair")},
        {"role": "user", "content": user},
    ]


def render_diagnostics(
    diagnostics: Sequence[Diagnostic], budget_lines: int = 100
) -> str:
    """Diagnostics as "file(line,col): severity: message" lines.

    Sorted by position; truncated to the budget keeping the earliest entries.
    """
    ordered = sorted(diagnostics, key=lambda d: (d.file, d.line, d.col))
    lines = [d.render() for d in ordered]
    if len(lines) > budget_lines:
        dropped = len(lines) - budget_lines
        lines = lines[:budget_lines] + [f"... ({dropped} further diagnostics omitted)"]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Providers


@dataclass
class RawResponse:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0


class Provider(Protocol):
    def complete(self, messages: list[Message], cfg: ProviderConfig) -> RawResponse: ...


ScriptedFn = Callable[[list[Message], ProviderConfig], RawResponse]
_SCRIPTED_REGISTRY: dict[str, ScriptedFn] = {}


def register_scripted_provider(name: str, fn: ScriptedFn) -> None:
    _SCRIPTED_REGISTRY[name] = fn


def unregister_scripted_provider(name: str) -> None:
    _SCRIPTED_REGISTRY.pop(name, None)


class HttpChatProvider:
    """OpenAI-style chat completions over HTTPS; keys come from the environment."""

    def complete(self, messages: list[Message], cfg: ProviderConfig) -> RawResponse:
        if not cfg.endpoint:
            raise ProviderError(f"provider {cfg.name} has no endpoint configured")
        headers = {}
        if cfg.api_key_env:
            key = os.environ.get(cfg.api_key_env, "")
            if not key:
                raise ProviderError(f"environment variable {cfg.api_key_env} is not set")
            value = f"{cfg.auth_scheme} {key}".strip() if cfg.auth_scheme else key
            headers[cfg.auth_header] = value
        payload: dict = {
            "model": cfg.model_id,
            "messages": messages,
            "temperature": cfg.temperature,
        }
        if cfg.reasoning_effort and cfg.reasoning_effort != "none":
            payload["reasoning_effort"] = cfg.reasoning_effort
        try:
            resp = httpx.post(cfg.endpoint, json=payload, headers=headers, timeout=cfg.timeout_s)
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport error: {exc}") from exc
        if resp.status_code == 429:
            raise ProviderError("rate limited")
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
            usage = body.get("usage", {})
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"malformed completion response: {exc}") from exc
        return RawResponse(
            text=text,
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
        )


def request_hash(model_id: str, messages: list[Message]) -> str:
    payload = json.dumps({"model": model_id, "messages": messages}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


class ReplayProvider:
    """Reads canned responses keyed by request hash; fully offline."""

    def complete(self, messages: list[Message], cfg: ProviderConfig) -> RawResponse:
        if not cfg.replay_dir:
            raise ProviderError(f"provider {cfg.name} has no replay_dir configured")
        key = request_hash(cfg.model_id, messages)
        path = Path(cfg.replay_dir) / f"{key}.json"
        if not path.exists():
            raise ProviderError(f"no canned response for request {key[:12]}...")
        data = json.loads(path.read_text())
        return RawResponse(
            text=data["text"],
            input_tokens=int(data.get("input_tokens", 0)),
            output_tokens=int(data.get("output_tokens", 0)),
        )


def record_replay_response(
    replay_dir: str | Path, model_id: str, messages: list[Message], response: RawResponse
) -> Path:
    """Store a canned response so a later ReplayProvider run finds it."""
    path = Path(replay_dir)
    path.mkdir(parents=True, exist_ok=True)
    key = request_hash(model_id, messages)
    target = path / f"{key}.json"
    target.write_text(
        json.dumps(
            {
                "text": response.text,
                "input_tokens": response.input_tokens,
                "output_tokens": response.output_tokens,
            },
            indent=2,
        )
    )
    return target


class _ScriptedProvider:
    def __init__(self, fn: ScriptedFn):
        self._fn = fn

    def complete(self, messages: list[Message], cfg: ProviderConfig) -> RawResponse:
        return self._fn(messages, cfg)


def build_provider(cfg: ProviderConfig) -> Provider:
    if cfg.kind == "openai-chat":
        return HttpChatProvider()
    if cfg.kind == "replay":
        return ReplayProvider()
    if cfg.kind.startswith("scripted:"):
        name = cfg.kind[len("scripted:") :]
        fn = _SCRIPTED_REGISTRY.get(name)
        if fn is None:
            raise ProviderError(f"scripted provider {name!r} is not registered")
        return _ScriptedProvider(fn)
    raise ProviderError(f"unknown provider kind {cfg.kind!r}")


# ---------------------------------------------------------------------------
# Accounting


@dataclass
class AttemptCost:
    provider: str
    ok: bool
    cost: float
    latency_s: float
    input_tokens: int = 0
    output_tokens: int = 0
    error: str | None = None


class CostLedger:
    """Per-attempt cost/latency records; safe under concurrent fan-out."""

    def __init__(self):
        self._lock = threading.Lock()
        self.attempts: list[AttemptCost] = []

    def record(self, attempt: AttemptCost) -> None:
        with self._lock:
            self.attempts.append(attempt)

    @property
    def total_cost(self) -> float:
        with self._lock:
            return sum(a.cost for a in self.attempts)

    @property
    def total_latency_s(self) -> float:
        with self._lock:
            return sum(a.latency_s for a in self.attempts)


def _cost(cfg: ProviderConfig, raw: RawResponse) -> float:
    return raw.input_tokens * cfg.cost_per_input_token + raw.output_tokens * cfg.cost_per_output_token


def _one_call(
    cfg: ProviderConfig,
    provider: Provider,
    request: GenerationRequest,
    ledger: CostLedger | None,
) -> GenerationResult:
    messages = request.messages()
    start = time.monotonic()
    try:
        raw = provider.complete(messages, cfg)
    except ProviderError:
        latency = time.monotonic() - start
        if ledger:
            ledger.record(AttemptCost(cfg.name, False, 0.0, latency, error="provider"))
        raise
    latency = time.monotonic() - start
    cost = _cost(cfg, raw)
    try:
        program = extract_code_block(raw.text)
    except NoCodeBlock as exc:
        if ledger:
            ledger.record(
                AttemptCost(cfg.name, False, cost, latency, raw.input_tokens, raw.output_tokens, str(exc))
            )
        raise
    if ledger:
        ledger.record(AttemptCost(cfg.name, True, cost, latency, raw.input_tokens, raw.output_tokens))
    return GenerationResult(
        provider=cfg.name,
        raw_text=raw.text,
        extracted_program=program,
        input_tokens=raw.input_tokens,
        output_tokens=raw.output_tokens,
        cost=cost,
        latency_s=latency,
        provider_priority=cfg.priority,
    )


def call_with_failover(
    providers: Sequence[ProviderConfig],
    request: GenerationRequest,
    ledger: CostLedger | None = None,
    make: Callable[[ProviderConfig], Provider] = build_provider,
) -> GenerationResult:
    """Try providers in priority order until one yields an extractable program."""
    if not providers:
        raise AllProvidersFailed([("<none>", "no providers configured")])
    failures: list[tuple[str, str]] = []
    for cfg in sorted(providers, key=lambda c: c.priority):
        try:
            provider = make(cfg)
            return _one_call(cfg, provider, request, ledger)
        except (ProviderError, NoCodeBlock) as exc:
            log.info("provider %s failed (%s); trying next", cfg.name, exc)
            failures.append((cfg.name, str(exc)))
    raise AllProvidersFailed(failures)


def call_all(
    providers: Sequence[ProviderConfig],
    request: GenerationRequest,
    ledger: CostLedger | None = None,
    make: Callable[[ProviderConfig], Provider] = build_provider,
) -> list[GenerationResult]:
    """Multimodel fan-out: every provider called concurrently; failures dropped."""
    results: list[GenerationResult] = []
    failures: list[tuple[str, str]] = []
    ordered = sorted(providers, key=lambda c: c.priority)

    def run(cfg: ProviderConfig):
        return _one_call(cfg, make(cfg), request, ledger)

    with ThreadPoolExecutor(max_workers=max(1, len(ordered))) as pool:
        futures = {pool.submit(run, cfg): cfg for cfg in ordered}
        for future, cfg in futures.items():
            try:
                results.append(future.result())
            except (ProviderError, NoCodeBlock) as exc:
                failures.append((cfg.name, str(exc)))
    if not results:
        raise AllProvidersFailed(failures or [("<none>", "no providers configured")])
    results.sort(key=lambda r: r.provider_priority)
    return results


# ---------------------------------------------------------------------------
# Arbitration


def _program_loc(result: GenerationResult) -> int:
    if not result.extracted_program:
        return 1 << 30
    stats = count_loc(parse(result.extracted_program))
    return stats.total


def arbitrate(results: Sequence[tuple[GenerationResult, VerificationOutcome]]) -> int:
    """Index of the best (result, outcome) pair.

    Ranking: syntactically valid first, then verifier success, then fewer
    total LOC, then faster verification, then provider priority. The raw
    response text is the final key so the order is total and permutation
    independent.
    """
    if not results:
        raise ValueError("arbitrate needs at least one result")

    def key(item: tuple[GenerationResult, VerificationOutcome]):
        result, outcome = item
        valid = result.extracted_program is not None and outcome.status is not VerificationStatus.SYNTAX_ERROR
        verified = outcome.status is VerificationStatus.SUCCESS
        return (
            0 if valid else 1,
            0 if verified else 1,
            _program_loc(result),
            outcome.elapsed_s,
            result.provider_priority,
            hashlib.sha256(result.raw_text.encode()).hexdigest(),
        )

    best = min(range(len(results)), key=lambda i: key(results[i]))
    return best
