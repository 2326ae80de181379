"""Run the Dafny verifier as an external process and classify its outcomes.

The real binary is optional: tests and offline runs register mock drivers
(``executable: "mock:<name>"``) that map program text to outcomes. Output
parsing is table-driven; the shipped pattern table targets Dafny 4.x and can
be overridden per config for other verifier versions.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import signal
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable

from .source_model import SourceFile, normalized_lines

log = logging.getLogger(__name__)

# extra wall time granted beyond the verifier's own time limit before the
# process group is killed
GRACE_S = 5.0


class VerificationStatus(str, Enum):
    SUCCESS = "Success"
    SYNTAX_ERROR = "SyntaxError"
    VERIFICATION_FAILURE = "VerificationFailure"
    TIMEOUT = "Timeout"
    TOOL_ERROR = "ToolError"


class ErrorClass(str, Enum):
    SUCCESS = "Success"
    SYNTAX = "Syntax"
    TIMEOUT = "Timeout"
    INCOMPLETE = "Incomplete"
    POTENTIALLY_INCORRECT = "PotentiallyIncorrect"


@dataclass(frozen=True)
class VerifierConfig:
    executable: str = "dafny"
    timeout_s: float = 60.0
    extra_args: tuple[str, ...] = ()
    filter_symbol: str | None = None

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")

    def with_(self, **kwargs) -> "VerifierConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class Diagnostic:
    file: str
    line: int
    col: int
    severity: str  # error | warning
    message: str
    category: str  # parse | resolution | verification | timeout | other

    def render(self) -> str:
        return f"{self.file}({self.line},{self.col}): {self.severity}: {self.message}"

    def to_dict(self) -> dict:
        return {
            "file": self.file,
            "line": self.line,
            "col": self.col,
            "severity": self.severity,
            "message": self.message,
            "category": self.category,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Diagnostic":
        return cls(**d)


@dataclass(frozen=True)
class VerificationOutcome:
    status: VerificationStatus
    diagnostics: tuple[Diagnostic, ...] = ()
    elapsed_s: float = 0.0
    obligations_verified: int = 0
    obligations_failed: int = 0
    from_cache: bool = False

    @property
    def error_diagnostics(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "elapsed_s": self.elapsed_s,
            "obligations_verified": self.obligations_verified,
            "obligations_failed": self.obligations_failed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationOutcome":
        return cls(
            status=VerificationStatus(d["status"]),
            diagnostics=tuple(Diagnostic.from_dict(x) for x in d.get("diagnostics", ())),
            elapsed_s=d.get("elapsed_s", 0.0),
            obligations_verified=d.get("obligations_verified", 0),
            obligations_failed=d.get("obligations_failed", 0),
        )


def success(obligations: int = 1, elapsed: float = 0.01) -> VerificationOutcome:
    return VerificationOutcome(
        status=VerificationStatus.SUCCESS, elapsed_s=elapsed, obligations_verified=obligations
    )


def failure(
    diags: list[Diagnostic] | None = None,
    verified: int = 0,
    failed: int = 1,
    elapsed: float = 0.01,
) -> VerificationOutcome:
    if diags is None:
        diags = [Diagnostic("input.dfy", 1, 1, "error", "a postcondition could not be proved", "verification")]
    return VerificationOutcome(
        status=VerificationStatus.VERIFICATION_FAILURE,
        diagnostics=tuple(diags),
        elapsed_s=elapsed,
        obligations_verified=verified,
        obligations_failed=failed,
    )


def syntax_failure(message: str = "parse error", line: int = 1) -> VerificationOutcome:
    return VerificationOutcome(
        status=VerificationStatus.SYNTAX_ERROR,
        diagnostics=(Diagnostic("input.dfy", line, 1, "error", message, "parse"),),
        elapsed_s=0.01,
    )


def timeout_outcome(timeout_s: float) -> VerificationOutcome:
    return VerificationOutcome(
        status=VerificationStatus.TIMEOUT,
        diagnostics=(
            Diagnostic("input.dfy", 0, 0, "error", f"verification timed out after {timeout_s:g}s", "timeout"),
        ),
        elapsed_s=timeout_s,
    )


def tool_error(message: str) -> VerificationOutcome:
    return VerificationOutcome(
        status=VerificationStatus.TOOL_ERROR,
        diagnostics=(Diagnostic("", 0, 0, "error", message, "other"),),
    )


# ---------------------------------------------------------------------------
# Mock drivers

MockDriver = Callable[[str, VerifierConfig], VerificationOutcome]
_MOCK_REGISTRY: dict[str, MockDriver] = {}


def register_mock_driver(name: str, driver: MockDriver) -> None:
    _MOCK_REGISTRY[name] = driver


def unregister_mock_driver(name: str) -> None:
    _MOCK_REGISTRY.pop(name, None)


class ScriptedVerifier:
    """Rule-based mock: first matching predicate wins, else the default.

    Records every received program so tests can assert on call sequence.
    """

    def __init__(self, default: VerificationOutcome | None = None):
        self.default = default if default is not None else success()
        self.rules: list[tuple[Callable[[str], bool], Callable[[str], VerificationOutcome]]] = []
        self.calls: list[tuple[str, float, str | None]] = []
        self._lock = threading.Lock()

    def when(self, predicate: Callable[[str], bool], outcome: VerificationOutcome | Callable[[str], VerificationOutcome]):
        fn = outcome if callable(outcome) else (lambda _t, _o=outcome: _o)
        self.rules.append((predicate, fn))
        return self

    def when_contains(self, needle: str, outcome: VerificationOutcome):
        return self.when(lambda t, n=needle: n in t, outcome)

    def __call__(self, text: str, cfg: VerifierConfig) -> VerificationOutcome:
        with self._lock:
            self.calls.append((text, cfg.timeout_s, cfg.filter_symbol))
        for predicate, fn in self.rules:
            if predicate(text):
                return fn(text)
        return self.default


class RequiredLinesOracle:
    """Deterministic oracle: verifies iff all required normalized lines survive.

    Monotone in the surviving line set, which makes the subset-minimal
    solution unique -- the basis for brute-force equivalence checks.
    """

    def __init__(self, required: list[str]):
        self.required = [" ".join(t.split()) for t in required]
        self.calls = 0

    def __call__(self, text: str, cfg: VerifierConfig) -> VerificationOutcome:
        self.calls += 1
        present = {t for t in normalized_lines(text) if t}
        missing = [t for t in self.required if t not in present]
        if missing:
            diags = [
                Diagnostic("input.dfy", 1, 1, "error", f"required fact lost: {t}", "verification")
                for t in missing
            ]
            return failure(diags, failed=len(missing))
        return success(obligations=len(self.required) + 1)


# ---------------------------------------------------------------------------
# Output parsing (table driven)


def _load_patterns() -> dict:
    data = resources.files("specforge").joinpath("data/verifier_patterns.json").read_text()
    return json.loads(data)


_PATTERNS: dict | None = None


def _patterns() -> dict:
    global _PATTERNS
    if _PATTERNS is None:
        _PATTERNS = _load_patterns()
    return _PATTERNS


def parse_verifier_output(output: str, patterns: dict | None = None) -> tuple[list[Diagnostic], int, int]:
    """Diagnostics plus (verified, failed) obligation counts from tool output."""
    pats = patterns or _patterns()
    diag_re = re.compile(pats["diagnostic"])
    summary_re = re.compile(pats["summary"])
    category_rules = [(rule["contains"].lower(), rule["category"]) for rule in pats["categories"]]

    diagnostics: list[Diagnostic] = []
    verified = 0
    failed = 0
    for line in output.splitlines():
        m = diag_re.match(line.strip())
        if m:
            msg = m.group("msg").strip()
            lowered = line.lower()
            category = "verification"
            for needle, cat in category_rules:
                if needle in lowered:
                    category = cat
                    break
            diagnostics.append(
                Diagnostic(
                    file=m.group("file"),
                    line=int(m.group("line")),
                    col=int(m.group("col")),
                    severity=m.group("sev").lower(),
                    message=msg,
                    category=category,
                )
            )
            continue
        sm = summary_re.search(line)
        if sm:
            verified = int(sm.group(1))
            failed = int(sm.group(2))
    return diagnostics, verified, failed


def _status_from_parse(
    diagnostics: list[Diagnostic], verified: int, failed: int, returncode: int
) -> VerificationStatus:
    errors = [d for d in diagnostics if d.severity == "error"]
    if any(d.category in ("parse", "resolution") for d in errors):
        return VerificationStatus.SYNTAX_ERROR
    if any(d.category == "timeout" for d in errors):
        return VerificationStatus.TIMEOUT
    if failed == 0 and not errors and returncode == 0:
        return VerificationStatus.SUCCESS
    return VerificationStatus.VERIFICATION_FAILURE


# ---------------------------------------------------------------------------
# verify


def verify(text: str, cfg: VerifierConfig) -> VerificationOutcome:
    """One verifier run over ``text``; enforces the timeout, kills stragglers."""
    if cfg.executable.startswith("mock:"):
        driver = _MOCK_REGISTRY.get(cfg.executable[len("mock:") :])
        if driver is None:
            return tool_error(f"mock driver {cfg.executable!r} is not registered")
        return driver(text, cfg)

    with tempfile.NamedTemporaryFile("w", suffix=".dfy", delete=False) as tmp:
        tmp.write(text)
        path = tmp.name
    argv = [cfg.executable, "verify", path, f"--verification-time-limit={max(1, int(cfg.timeout_s))}"]
    if cfg.filter_symbol:
        argv.append(f"--filter-symbol={cfg.filter_symbol}")
    argv.extend(cfg.extra_args)

    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            start_new_session=True,
        )
    except FileNotFoundError:
        os.unlink(path)
        return tool_error(f"verifier executable not found: {cfg.executable}")
    except OSError as exc:
        os.unlink(path)
        return tool_error(f"failed to launch verifier: {exc}")

    try:
        output, _ = proc.communicate(timeout=cfg.timeout_s + GRACE_S)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            proc.kill()
        proc.wait()
        os.unlink(path)
        return timeout_outcome(cfg.timeout_s)
    finally:
        try:
            os.unlink(path)
        except FileNotFoundError:
            pass
    elapsed = time.monotonic() - start

    diagnostics, verified, failed = parse_verifier_output(output or "")
    if proc.returncode != 0 and not diagnostics and not verified and not failed:
        return tool_error(f"verifier exited with code {proc.returncode}: {(output or '')[:500]}")
    status = _status_from_parse(diagnostics, verified, failed, proc.returncode)
    return VerificationOutcome(
        status=status,
        diagnostics=tuple(diagnostics),
        elapsed_s=elapsed,
        obligations_verified=verified,
        obligations_failed=failed,
    )


# ---------------------------------------------------------------------------
# Cache


def cache_key(text: str, cfg: VerifierConfig) -> str:
    normalized = "\n".join(t for t in normalized_lines(text) if t)
    payload = json.dumps(
        {
            "text": normalized,
            "extra_args": list(cfg.extra_args),
            "filter_symbol": cfg.filter_symbol,
            "timeout_s": cfg.timeout_s,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


class VerificationCache:
    """Append-only JSON-lines store of (key, outcome); corrupt lines are misses."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._mem: dict[str, VerificationOutcome] = {}
        self._lock = threading.Lock()
        self._loaded = False

    def _load(self) -> None:
        if self._loaded:
            return
        self._loaded = True
        if not self.path.exists():
            return
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                self._mem[entry["key"]] = VerificationOutcome.from_dict(entry["outcome"])
            except (json.JSONDecodeError, KeyError, ValueError):
                log.warning("skipping corrupt cache entry in %s", self.path)

    def get(self, key: str) -> VerificationOutcome | None:
        with self._lock:
            self._load()
            return self._mem.get(key)

    def put(self, key: str, outcome: VerificationOutcome) -> None:
        with self._lock:
            self._load()
            self._mem[key] = outcome
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as fh:
                fh.write(json.dumps({"key": key, "outcome": outcome.to_dict()}) + "\n")


def cached_verify(text: str, cfg: VerifierConfig, cache: VerificationCache) -> VerificationOutcome:
    key = cache_key(text, cfg)
    hit = cache.get(key)
    if hit is not None:
        return replace(hit, from_cache=True)
    outcome = verify(text, cfg)
    if outcome.status is not VerificationStatus.TOOL_ERROR:
        cache.put(key, outcome)
    return outcome


# ---------------------------------------------------------------------------
# Outcome classification


def classify_outcome(
    outcome: VerificationOutcome,
    candidate: SourceFile,
    manual: SourceFile | None,
    verify_fn: Callable[[str], VerificationOutcome],
) -> ErrorClass:
    """Error taxonomy for one candidate's outcome.

    Non-syntax, non-timeout failures are re-checked with the manual
    solution's clauses merged in: if the union verifies, the candidate was
    merely incomplete. A skeleton mismatch during the merge means the
    candidate altered the program and stays PotentiallyIncorrect.
    """
    from .strip_merge import SkeletonMismatch, merge_with_manual

    if outcome.status is VerificationStatus.SUCCESS:
        return ErrorClass.SUCCESS
    if outcome.status is VerificationStatus.SYNTAX_ERROR:
        return ErrorClass.SYNTAX
    if outcome.status is VerificationStatus.TIMEOUT:
        return ErrorClass.TIMEOUT
    if manual is not None and outcome.status is VerificationStatus.VERIFICATION_FAILURE:
        try:
            merged = merge_with_manual(candidate, manual)
        except SkeletonMismatch:
            log.info("merge skipped: candidate changed the program skeleton (cheating case)")
            return ErrorClass.POTENTIALLY_INCORRECT
        if verify_fn(merged).status is VerificationStatus.SUCCESS:
            return ErrorClass.INCOMPLETE
    return ErrorClass.POTENTIALLY_INCORRECT
