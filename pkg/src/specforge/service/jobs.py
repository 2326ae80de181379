"""Asynchronous job execution for the local assistant service.

Jobs (generate / repair / minimize) run on a bounded worker pool. Each job
accumulates ordered progress events that clients poll; cancellation is
cooperative and takes effect between attempts. Nothing persists across
restarts: the editor resubmits.
"""

from __future__ import annotations

import logging
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

log = logging.getLogger(__name__)

from ..config import AppConfig
from ..gateway import (
    AllProvidersFailed,
    GenerationRequest,
    Provider,
    ProviderConfig,
    build_provider,
)
from ..minimizer import MinimizeOptions, OriginalNotContained, minimize
from ..repair import Progress, RunConfig, Runner, check_negative_tests
from ..source_model import parse
from ..verifier import VerificationCache, VerificationOutcome, VerificationStatus

JOB_KINDS = ("generate", "repair", "minimize")


class BadRequest(Exception):
    pass


class UnknownJob(Exception):
    pass


class _Cancelled(Exception):
    pass


@dataclass
class ProgressEvent:
    ordinal: int
    attempt_index: int
    phase: str  # prompting | verifying | minimizing
    summary: str
    obligations_verified: int = 0
    obligations_failed: int = 0

    def to_dict(self) -> dict:
        return {
            "ordinal": self.ordinal,
            "attempt_index": self.attempt_index,
            "phase": self.phase,
            "summary": self.summary,
            "obligations_verified": self.obligations_verified,
            "obligations_failed": self.obligations_failed,
        }


@dataclass
class Job:
    id: str
    kind: str
    state: str = "queued"  # queued | running | done | failed | cancelled
    events: list[ProgressEvent] = field(default_factory=list)
    result: dict | None = None
    error: str | None = None
    cancel_requested: threading.Event = field(default_factory=threading.Event)


def best_effort(
    attempts: Sequence[tuple[str, VerificationOutcome]],
) -> tuple[str, str]:
    """Pick the most promising non-verifying program.

    Ranked by obligations verified (more wins), then error diagnostics
    (fewer wins), then attempt order (earlier wins). Returns the program and
    a rendered explanation of its remaining errors.
    """
    if not attempts:
        raise ValueError("best_effort needs at least one attempt")

    def key(item: tuple[int, tuple[str, VerificationOutcome]]):
        idx, (_, outcome) = item
        return (-outcome.obligations_verified, len(outcome.error_diagnostics), idx)

    idx, (program, outcome) = min(enumerate(attempts), key=key)
    errors = outcome.error_diagnostics
    explanation = (
        f"best attempt (#{idx + 1}) verified {outcome.obligations_verified} obligations "
        f"with {len(errors)} remaining errors"
    )
    if errors:
        explanation += ":\n" + "\n".join(d.render() for d in errors[:20])
    return program, explanation


class JobManager:
    def __init__(
        self,
        config: AppConfig,
        make_provider: Callable[[ProviderConfig], Provider] = build_provider,
    ):
        self.config = config
        self.make_provider = make_provider
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=max(1, config.service.max_concurrent_jobs))
        self._cache = VerificationCache(config.workspace / "verify_cache.jsonl")

    # -- public API

    def submit(
        self,
        kind: str,
        program_text: str,
        selection_span: tuple[int, int] | None = None,
        config_overrides: dict | None = None,
    ) -> str:
        if kind not in JOB_KINDS:
            raise BadRequest(f"unknown job kind {kind!r}")
        if not program_text or not program_text.strip():
            raise BadRequest("program_text must be nonempty")
        overrides = dict(config_overrides or {})
        if kind == "minimize" and "original_text" not in overrides:
            raise BadRequest("minimize jobs need original_text in config_overrides")
        job = Job(id=uuid.uuid4().hex, kind=kind)
        with self._lock:
            self._jobs[job.id] = job
        self._pool.submit(self._run, job, program_text, selection_span, overrides)
        return job.id

    def cancel(self, job_id: str) -> str:
        job = self._get(job_id)
        job.cancel_requested.set()
        with self._lock:
            if job.state in ("queued", "running"):
                job.state = "cancelled"
        return job.state

    def events(self, job_id: str, since: int = 0) -> tuple[list[ProgressEvent], str]:
        job = self._get(job_id)
        with self._lock:
            return [e for e in job.events if e.ordinal > since], job.state

    def get(self, job_id: str) -> Job:
        return self._get(job_id)

    def shutdown(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)

    # -- internals

    def _get(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise UnknownJob(job_id)
        return job

    def _emit(self, job: Job, progress: Progress) -> None:
        if job.cancel_requested.is_set():
            raise _Cancelled()
        with self._lock:
            job.events.append(
                ProgressEvent(
                    ordinal=len(job.events) + 1,
                    attempt_index=progress.attempt_index,
                    phase=progress.phase,
                    summary=progress.summary,
                    obligations_verified=progress.obligations_verified,
                    obligations_failed=progress.obligations_failed,
                )
            )

    def _job_run_config(self, kind: str, overrides: dict) -> RunConfig:
        retry_limit = int(overrides.get("retry_limit", self.config.service.retry_limit))
        if kind == "generate":
            base = dict(strategy="direct", max_direct_runs=retry_limit)
        else:
            base = dict(strategy="repair", max_repair_iterations=retry_limit)
        for key in ("multimodel", "minimize_on_success", "diagnostics_budget_lines"):
            if key in overrides:
                base[key] = overrides[key]
        return self.config.run_config(**base)

    def _run(self, job: Job, program_text: str, selection_span, overrides: dict) -> None:
        if job.cancel_requested.is_set():
            return
        with self._lock:
            if job.state == "cancelled":
                return
            job.state = "running"
        try:
            if job.kind == "minimize":
                result = self._run_minimize(job, program_text, overrides)
            else:
                result = self._run_generate(job, program_text, selection_span, overrides)
            with self._lock:
                if job.state != "cancelled":
                    job.result = result
                    job.state = "done"
            self._persist_result(job)
        except _Cancelled:
            with self._lock:
                job.state = "cancelled"
        except Exception as exc:  # job isolation: a crash fails only this job
            with self._lock:
                job.error = f"{type(exc).__name__}: {exc}"
                job.state = "failed"

    def _persist_result(self, job: Job) -> None:
        """Jobs are in-memory only, but finished artifacts land in the workspace."""
        import json

        try:
            target = self.config.workspace / "jobs"
            target.mkdir(parents=True, exist_ok=True)
            (target / f"{job.id}.json").write_text(
                json.dumps({"kind": job.kind, "result": job.result}, indent=2)
            )
        except OSError as exc:
            log.warning("could not persist job artifact: %s", exc)

    def _run_generate(self, job: Job, program_text: str, selection_span, overrides: dict) -> dict:
        cfg = self._job_run_config(job.kind, overrides)
        runner = Runner(
            cfg,
            cache=self._cache,
            make_provider=self.make_provider,
            progress=lambda p: self._emit(job, p),
        )
        if selection_span is not None:
            solve_program, attempts_meta, trail = self._generate_fragment(
                job, runner, program_text, selection_span, cfg
            )
        else:
            result = runner.run(program_text)
            solve_program = result.final_program
            attempts_meta = [a.to_dict() for a in result.attempts]
            trail = runner.trail

        payload: dict = {"attempts": attempts_meta, "solved": solve_program is not None}
        if solve_program is not None:
            negative = check_negative_tests(
                solve_program, cfg, cache=self._cache, make_provider=self.make_provider
            )
            payload["negative_tests_passed"] = negative.passed
            payload["negative_failures"] = [
                {"marker_index": f.marker_index, "line": f.line, "text": f.text}
                for f in negative.failures
            ]
            payload["program"] = solve_program
            payload["best_effort"] = False
        elif trail:
            program, explanation = best_effort(trail)
            payload["program"] = program
            payload["best_effort"] = True
            payload["explanation"] = explanation
        else:
            payload["program"] = None
            payload["best_effort"] = False
            payload["explanation"] = "no candidate program was produced"
        return payload

    def _generate_fragment(
        self, job: Job, runner: Runner, buffer_text: str, selection_span, cfg: RunConfig
    ):
        start, end = selection_span
        lines = buffer_text.split("\n")
        if not (1 <= start <= end <= len(lines)):
            raise BadRequest(f"selection {start}..{end} outside buffer of {len(lines)} lines")
        fragment = "\n".join(lines[start - 1 : end])
        stripped_whole = parse(buffer_text)
        attempts_meta: list[dict] = []
        trail: list[tuple[str, VerificationOutcome]] = []
        from ..strip_merge import detect_cheating, relocate_invariants

        for i in range(1, cfg.max_attempts + 1):
            self._emit(job, Progress(i, "prompting", f"fragment generation attempt {i}"))
            request = GenerationRequest(prompt_kind="direct", program_text=fragment)
            try:
                from ..gateway import CostLedger, call_with_failover

                ledger = CostLedger()
                gen = call_with_failover(cfg.providers, request, ledger, self.make_provider)
            except AllProvidersFailed as exc:
                attempts_meta.append({"attempt_index": i, "error": str(exc)})
                continue
            new_fragment = relocate_invariants(gen.extracted_program or "")
            candidate = "\n".join(lines[: start - 1] + new_fragment.split("\n") + lines[end:])
            violations = detect_cheating(stripped_whole, parse(candidate))
            if violations:
                attempts_meta.append(
                    {"attempt_index": i, "error": f"{len(violations)} guardrail violations"}
                )
                continue
            self._emit(job, Progress(i, "verifying", "verifying whole buffer"))
            outcome = runner._verify(candidate)
            trail.append((candidate, outcome))
            attempts_meta.append(
                {
                    "attempt_index": i,
                    "status": outcome.status.value,
                    "obligations_verified": outcome.obligations_verified,
                    "obligations_failed": outcome.obligations_failed,
                }
            )
            if outcome.status is VerificationStatus.SUCCESS:
                return candidate, attempts_meta, trail
        return None, attempts_meta, trail

    def _run_minimize(self, job: Job, program_text: str, overrides: dict) -> dict:
        original_text = overrides["original_text"]
        cfg = self.config.run_config()
        runner = Runner(
            cfg,
            cache=self._cache,
            make_provider=self.make_provider,
            progress=lambda p: self._emit(job, p),
        )
        self._emit(job, Progress(0, "verifying", "checking buffer verifies before minimizing"))
        outcome = runner._verify(program_text)
        if outcome.status is not VerificationStatus.SUCCESS:
            raise BadRequest("buffer does not verify; minimize only runs on verified programs")

        def verify_fn(text: str, timeout_s: float, filter_symbol: str | None):
            vcfg = cfg.verifier.with_(timeout_s=timeout_s, filter_symbol=filter_symbol)
            return runner._verify(text, vcfg)

        self._emit(job, Progress(0, "minimizing", "delta minimization running"))
        opts = MinimizeOptions(
            short_timeout_s=float(overrides.get("short_timeout_s", 10.0)),
            check_initial=False,
        )
        try:
            result = minimize(original_text, program_text, verify_fn, opts)
        except OriginalNotContained as exc:
            raise BadRequest(f"buffer does not contain the original program: {exc}")
        return {
            "program": result.text,
            "rounds": result.rounds,
            "aborted": result.aborted,
            "removals": [
                {
                    "category": r.category,
                    "start_line": r.span.start_line,
                    "end_line": r.span.end_line,
                    "round": r.round,
                    "text": r.text,
                }
                for r in result.removals
            ],
        }
