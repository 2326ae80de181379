"""Per-program generate-check-repair orchestration.

A direct run issues up to N independent generations and stops at the first
verified candidate. A repair run starts with one direct attempt, then feeds
the verifier's diagnostics back through the repair prompt for up to nine
iterations. Candidates that trip the cheating guardrails are discarded: the
last clean program is carried forward and the violations are appended to the
error block of the next request.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from .gateway import (
    AllProvidersFailed,
    CostLedger,
    GenerationRequest,
    GenerationResult,
    Provider,
    ProviderConfig,
    arbitrate,
    build_provider,
    call_all,
    call_with_failover,
    render_diagnostics,
)
from .minimizer import OriginalNotContained, minimize
from .source_model import LocStats, count_loc, parse
from .strip_merge import (
    Violation,
    activate_negative_test,
    count_negative_tests,
    detect_cheating,
    relocate_invariants,
    strip_annotations,
)
from .verifier import (
    ErrorClass,
    VerificationCache,
    VerificationOutcome,
    VerificationStatus,
    VerifierConfig,
    cached_verify,
    classify_outcome,
    verify,
)

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    strategy: str = "repair"  # direct | repair
    max_direct_runs: int = 5
    max_repair_iterations: int = 9
    multimodel: bool = False
    providers: list[ProviderConfig] = field(default_factory=list)
    verifier: VerifierConfig = field(default_factory=VerifierConfig)
    minimize_on_success: bool = False
    diagnostics_budget_lines: int = 100
    negative_retry_budget: int = 1
    config_id: str = ""

    def __post_init__(self):
        if self.strategy not in ("direct", "repair"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.max_direct_runs < 1:
            raise ValueError("max_direct_runs must be at least 1")
        if self.max_repair_iterations < 0:
            raise ValueError("max_repair_iterations must be nonnegative")

    @property
    def max_attempts(self) -> int:
        if self.strategy == "direct":
            return self.max_direct_runs
        return 1 + self.max_repair_iterations


@dataclass
class AttemptRecord:
    attempt_index: int
    kind: str  # direct | repair
    provider: str
    error_class: ErrorClass
    cheating_violations: int = 0
    loc: LocStats | None = None
    cost: float = 0.0
    llm_latency_s: float = 0.0
    verify_elapsed_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "attempt_index": self.attempt_index,
            "kind": self.kind,
            "provider": self.provider,
            "error_class": self.error_class.value,
            "cheating_violations": self.cheating_violations,
            "loc": [self.loc.L, self.loc.A, self.loc.H] if self.loc else None,
            "cost": self.cost,
            "llm_latency_s": self.llm_latency_s,
            "verify_elapsed_s": self.verify_elapsed_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttemptRecord":
        loc = d.get("loc")
        return cls(
            attempt_index=d["attempt_index"],
            kind=d["kind"],
            provider=d["provider"],
            error_class=ErrorClass(d["error_class"]),
            cheating_violations=d.get("cheating_violations", 0),
            loc=LocStats(*loc) if loc else None,
            cost=d.get("cost", 0.0),
            llm_latency_s=d.get("llm_latency_s", 0.0),
            verify_elapsed_s=d.get("verify_elapsed_s", 0.0),
        )


@dataclass
class SolveResult:
    solved: bool
    attempts: list[AttemptRecord]
    final_program: str | None = None
    minimized_program: str | None = None
    negative_tests_passed: bool | None = None

    @property
    def first_success_attempt(self) -> int | None:
        for record in self.attempts:
            if record.error_class is ErrorClass.SUCCESS:
                return record.attempt_index
        return None


@dataclass
class Progress:
    attempt_index: int
    phase: str  # prompting | verifying | minimizing
    summary: str
    obligations_verified: int = 0
    obligations_failed: int = 0


ProgressFn = Callable[[Progress], None]


@dataclass
class _Candidate:
    program: str | None
    result: GenerationResult | None
    outcome: VerificationOutcome | None
    violations: list[Violation]


class Runner:
    """Binds a RunConfig to its verifier cache and provider factory."""

    def __init__(
        self,
        cfg: RunConfig,
        cache: VerificationCache | None = None,
        make_provider: Callable[[ProviderConfig], Provider] = build_provider,
        progress: ProgressFn | None = None,
        manual_text: str | None = None,
    ):
        self.cfg = cfg
        self.cache = cache
        self.make_provider = make_provider
        self.progress = progress or (lambda _e: None)
        self.manual = parse(manual_text) if manual_text else None
        # (program, outcome) per verified candidate, for best-effort selection
        self.trail: list[tuple[str, VerificationOutcome]] = []

    # -- plumbing

    def _verify(self, text: str, verifier: VerifierConfig | None = None) -> VerificationOutcome:
        vcfg = verifier or self.cfg.verifier
        if self.cache is not None:
            return cached_verify(text, vcfg, self.cache)
        return verify(text, vcfg)

    def _classify(self, outcome: VerificationOutcome, program: str) -> ErrorClass:
        return classify_outcome(outcome, parse(program), self.manual, self._verify)

    def _emit(self, attempt: int, phase: str, summary: str, outcome: VerificationOutcome | None = None) -> None:
        self.progress(
            Progress(
                attempt_index=attempt,
                phase=phase,
                summary=summary,
                obligations_verified=outcome.obligations_verified if outcome else 0,
                obligations_failed=outcome.obligations_failed if outcome else 0,
            )
        )

    # -- one attempt

    def _postprocess(self, result: GenerationResult, stripped_file) -> _Candidate:
        program = relocate_invariants(result.extracted_program or "")
        violations = detect_cheating(stripped_file, parse(program))
        return _Candidate(program=program, result=result, outcome=None, violations=violations)

    def _attempt(
        self, attempt_index: int, request: GenerationRequest, stripped_file
    ) -> _Candidate:
        ledger = CostLedger()
        self._emit(attempt_index, "prompting", f"{request.prompt_kind} request")
        if self.cfg.multimodel:
            results = call_all(self.cfg.providers, request, ledger, self.make_provider)
            candidates = [self._postprocess(r, stripped_file) for r in results]
            clean = [c for c in candidates if not c.violations]
            pool = clean if clean else candidates
            for cand in pool:
                if not cand.violations:
                    self._emit(attempt_index, "verifying", f"candidate from {cand.result.provider}")
                    cand.outcome = self._verify(cand.program)
            if clean:
                ranked = [(c.result, c.outcome) for c in clean]
                winner = clean[arbitrate(ranked)]
            else:
                winner = pool[0]
            winner.result.cost = ledger.total_cost
            winner.result.latency_s = ledger.total_latency_s
            return winner
        result = call_with_failover(self.cfg.providers, request, ledger, self.make_provider)
        result.cost = ledger.total_cost
        result.latency_s = ledger.total_latency_s
        cand = self._postprocess(result, stripped_file)
        if not cand.violations:
            self._emit(attempt_index, "verifying", f"candidate from {result.provider}")
            cand.outcome = self._verify(cand.program)
        return cand

    def _record(self, attempt_index: int, kind: str, cand: _Candidate) -> AttemptRecord:
        if cand.program and cand.outcome is not None:
            self.trail.append((cand.program, cand.outcome))
        if cand.violations:
            error_class = ErrorClass.POTENTIALLY_INCORRECT
        elif cand.outcome is not None:
            error_class = self._classify(cand.outcome, cand.program)
        else:
            error_class = ErrorClass.SYNTAX
        loc = None
        if cand.program:
            loc = count_loc(parse(cand.program))
        outcome = cand.outcome
        self._emit(
            attempt_index,
            "verifying",
            f"attempt {attempt_index}: {error_class.value}"
            + (f" ({len(cand.violations)} guardrail violations)" if cand.violations else ""),
            outcome,
        )
        return AttemptRecord(
            attempt_index=attempt_index,
            kind=kind,
            provider=cand.result.provider if cand.result else "<failed>",
            error_class=error_class,
            cheating_violations=len(cand.violations),
            loc=loc,
            cost=cand.result.cost if cand.result else 0.0,
            llm_latency_s=cand.result.latency_s if cand.result else 0.0,
            verify_elapsed_s=outcome.elapsed_s if outcome else 0.0,
        )

    def _failed_attempt(self, attempt_index: int, kind: str, reason: str) -> AttemptRecord:
        self._emit(attempt_index, "prompting", f"attempt {attempt_index} failed: {reason}")
        return AttemptRecord(
            attempt_index=attempt_index,
            kind=kind,
            provider="<failed>",
            error_class=ErrorClass.SYNTAX,
        )

    # -- strategies

    def run_direct(self, stripped_program: str) -> SolveResult:
        stripped_file = parse(stripped_program)
        attempts: list[AttemptRecord] = []
        final: str | None = None
        for i in range(1, self.cfg.max_direct_runs + 1):
            request = GenerationRequest(prompt_kind="direct", program_text=stripped_program)
            try:
                cand = self._attempt(i, request, stripped_file)
            except AllProvidersFailed as exc:
                attempts.append(self._failed_attempt(i, "direct", str(exc)))
                continue
            record = self._record(i, "direct", cand)
            attempts.append(record)
            if record.error_class is ErrorClass.SUCCESS:
                final = cand.program
                break
        result = SolveResult(solved=final is not None, attempts=attempts, final_program=final)
        self._maybe_minimize(stripped_program, result)
        return result

    def run_repair(self, stripped_program: str) -> SolveResult:
        stripped_file = parse(stripped_program)
        attempts: list[AttemptRecord] = []
        final: str | None = None
        current = stripped_program
        errors_text: str | None = None
        for i in range(1, self.cfg.max_attempts + 1):
            if i == 1:
                request = GenerationRequest(prompt_kind="direct", program_text=stripped_program)
            else:
                request = GenerationRequest(
                    prompt_kind="repair", program_text=current, verifier_errors=errors_text
                )
            try:
                cand = self._attempt(i, request, stripped_file)
            except AllProvidersFailed as exc:
                attempts.append(self._failed_attempt(i, "direct" if i == 1 else "repair", str(exc)))
                errors_text = errors_text or "input.dfy(1,1): error: no model output was produced"
                continue
            record = self._record(i, "direct" if i == 1 else "repair", cand)
            attempts.append(record)
            if record.error_class is ErrorClass.SUCCESS:
                final = cand.program
                break
            if cand.violations:
                # discard the cheater: re-send the previous program with the
                # violation list appended to the error block
                violation_lines = "\n".join(
                    f"input.dfy({v.line or 1},1): error: forbidden construct ({v.kind}): {v.detail}"
                    for v in cand.violations
                )
                errors_text = (errors_text + "\n" if errors_text else "") + violation_lines
            else:
                current = cand.program
                errors_text = render_diagnostics(
                    cand.outcome.diagnostics, self.cfg.diagnostics_budget_lines
                ) or "input.dfy(1,1): error: verification failed without diagnostics"
        result = SolveResult(solved=final is not None, attempts=attempts, final_program=final)
        self._maybe_minimize(stripped_program, result)
        return result

    def run(self, stripped_program: str) -> SolveResult:
        if self.cfg.strategy == "direct":
            return self.run_direct(stripped_program)
        return self.run_repair(stripped_program)

    def _maybe_minimize(self, stripped_program: str, result: SolveResult) -> None:
        if not (self.cfg.minimize_on_success and result.solved and result.final_program):
            return
        self._emit(len(result.attempts), "minimizing", "shrinking verified program")

        def verify_fn(text: str, timeout_s: float, filter_symbol: str | None) -> VerificationOutcome:
            vcfg = self.cfg.verifier.with_(timeout_s=timeout_s, filter_symbol=filter_symbol)
            return self._verify(text, vcfg)

        try:
            minimized = minimize(stripped_program, result.final_program, verify_fn)
        except (OriginalNotContained, ValueError) as exc:
            log.warning("minimization skipped: %s", exc)
            return
        result.minimized_program = minimized.text


@dataclass
class NegativeTestFailure:
    marker_index: int
    line: int
    text: str


@dataclass
class NegativeTestOutcome:
    passed: bool
    failures: list[NegativeTestFailure]
    program: str

    def __iter__(self):
        return iter((self.passed, self.failures))


def check_negative_tests(
    verified_program: str,
    cfg: RunConfig,
    cache: VerificationCache | None = None,
    make_provider: Callable[[ProviderConfig], Provider] = build_provider,
    retry: bool = False,
) -> NegativeTestOutcome:
    """Activate each negative-test marker in turn; all must fail verification.

    A marker that verifies signals an overly weak precondition or overly
    strong postcondition. With ``retry`` set, each failing marker triggers
    one repair attempt carrying a synthesized error that names the marker.
    """
    runner = Runner(cfg, cache=cache, make_provider=make_provider)
    program = verified_program
    budget = cfg.negative_retry_budget if retry else 0

    def scan(text: str) -> list[NegativeTestFailure]:
        failures = []
        total = count_negative_tests(text)
        for index in range(1, total + 1):
            activated = activate_negative_test(text, index)
            changed = [
                (ln, b)
                for ln, (a, b) in enumerate(
                    zip(text.split("\n"), activated.split("\n")), start=1
                )
                if a != b
            ]
            line, stmt = changed[0] if changed else (0, "")
            outcome = runner._verify(activated)
            if outcome.status is VerificationStatus.SUCCESS:
                failures.append(NegativeTestFailure(index, line, stmt.strip()))
        return failures

    failures = scan(program)
    retries_left = budget * len(failures)
    while failures and retries_left > 0:
        failing = failures[0]
        retries_left -= 1
        synthesized = (
            f"input.dfy({failing.line},1): error: negative test unexpectedly verified after "
            f"activation: {failing.text} -- the precondition is too weak or the "
            f"postcondition too strong; strengthen the specification so this statement "
            f"fails verification"
        )
        request = GenerationRequest(
            prompt_kind="repair", program_text=program, verifier_errors=synthesized
        )
        stripped_file = parse(strip_annotations(parse(program)))
        try:
            cand = runner._attempt(0, request, stripped_file)
        except AllProvidersFailed:
            break
        if cand.violations or cand.outcome is None:
            continue
        if cand.outcome.status is not VerificationStatus.SUCCESS:
            continue
        new_failures = scan(cand.program)
        if len(new_failures) < len(failures):
            program = cand.program
            failures = new_failures

    return NegativeTestOutcome(passed=not failures, failures=failures, program=program)
