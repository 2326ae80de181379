"""Dataset ingestion, experiment execution and metric aggregation.

Datasets follow the layout ``root/manifest.json`` plus ``root/programs/*.dfy``
(manual solutions with annotations; stripped variants are derived on load).
Experiments run every (program, config) pair under a bounded worker pool,
persist raw attempt records incrementally so an aborted run resumes where it
stopped, and aggregate pass@k / repair@k, costs, latencies, LOC overhead,
the logistic difficulty fit and ROC/AUC into a deterministic report.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .gateway import Provider, ProviderConfig, build_provider, prompt_fingerprints
from .repair import AttemptRecord, RunConfig, Runner
from .source_model import LocStats, count_loc, parse
from .stats import FeatureRow, RegressionFit, SingleClass, fit_logistic, roc_auc
from .strip_merge import strip_annotations
from .verifier import ErrorClass, VerificationCache

log = logging.getLogger(__name__)

CATEGORIES = ("check", "filter", "map", "math", "merge", "reduce", "reorder", "search")


class ManifestError(Exception):
    """The dataset manifest is missing, malformed or references absent files."""


@dataclass
class DatasetEntry:
    id: str
    category: str
    manual_path: str
    manual_text: str
    stripped_text: str
    features: LocStats
    manifest_loc: LocStats | None = None


def load_dataset(root: str | Path) -> list[DatasetEntry]:
    """Parse the manifest, compute features and derive stripped variants.

    Malformed programs (parse warnings) are skipped with a logged warning;
    a manifest entry pointing at a missing file is an error.
    """
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ManifestError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
        programs = manifest["programs"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise ManifestError(f"malformed manifest: {exc}") from exc

    entries: list[DatasetEntry] = []
    for item in programs:
        pid = item.get("id", "<missing id>")
        category = item.get("category", "")
        if category not in CATEGORIES:
            raise ManifestError(f"program {pid}: unknown category {category!r}")
        path = root / item["file"]
        if not path.exists():
            raise ManifestError(f"program {pid}: file not found: {path}")
        text = path.read_text()
        file = parse(text, str(path))
        if file.warnings:
            log.warning("skipping %s: %s", pid, "; ".join(file.warnings))
            continue
        manifest_loc = None
        if "loc" in item:
            manifest_loc = LocStats(item["loc"]["L"], item["loc"]["A"], item["loc"]["H"])
        entries.append(
            DatasetEntry(
                id=pid,
                category=category,
                manual_path=str(path),
                manual_text=text,
                stripped_text=strip_annotations(file),
                features=count_loc(file),
                manifest_loc=manifest_loc,
            )
        )
    return entries


# ---------------------------------------------------------------------------
# Metrics


Records = Mapping[str, Sequence[AttemptRecord]] | Sequence[Sequence[AttemptRecord]]


def _attempt_lists(records: Records) -> list[Sequence[AttemptRecord]]:
    if isinstance(records, Mapping):
        return [records[k] for k in sorted(records)]
    return list(records)


def _first_success(attempts: Sequence[AttemptRecord]) -> int | None:
    for record in attempts:
        if record.error_class is ErrorClass.SUCCESS:
            return record.attempt_index
    return None


def pass_at_k(records: Records, k: int) -> float:
    """Fraction of programs whose first verified attempt has index <= k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    lists = _attempt_lists(records)
    if not lists:
        return 0.0
    solved = sum(1 for attempts in lists if (_first_success(attempts) or 1 << 30) <= k)
    return solved / len(lists)


def extra_loc_percent(solution_text: str, manual_text: str) -> float:
    """100 * (solution total LOC - manual total LOC) / manual total LOC; LOC = L + A."""
    sol = count_loc(parse(solution_text))
    man = count_loc(parse(manual_text))
    if man.total == 0:
        raise ValueError("manual solution has no countable lines")
    return 100.0 * (sol.total - man.total) / man.total


# ---------------------------------------------------------------------------
# Experiment runner


@dataclass
class RunRecord:
    """One (program, config) execution, as persisted to the records file."""

    program_id: str
    config_id: str
    solved: bool
    attempts: list[AttemptRecord]
    extra_loc_percent: float | None = None
    minimized_extra_loc_percent: float | None = None
    negative_tests_passed: bool | None = None

    def to_dict(self) -> dict:
        return {
            "program_id": self.program_id,
            "config_id": self.config_id,
            "solved": self.solved,
            "attempts": [a.to_dict() for a in self.attempts],
            "extra_loc_percent": self.extra_loc_percent,
            "minimized_extra_loc_percent": self.minimized_extra_loc_percent,
            "negative_tests_passed": self.negative_tests_passed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            program_id=d["program_id"],
            config_id=d["config_id"],
            solved=d["solved"],
            attempts=[AttemptRecord.from_dict(a) for a in d["attempts"]],
            extra_loc_percent=d.get("extra_loc_percent"),
            minimized_extra_loc_percent=d.get("minimized_extra_loc_percent"),
            negative_tests_passed=d.get("negative_tests_passed"),
        )


class RecordStore:
    """Append-only JSON-lines record persistence; the basis for crash resume."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> list[RunRecord]:
        if not self.path.exists():
            return []
        records = []
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                records.append(RunRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError):
                log.warning("skipping corrupt record line in %s", self.path)
        return records

    def append(self, record: RunRecord) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as fh:
                fh.write(json.dumps(record.to_dict()) + "\n")


def _round(x: float | None, digits: int = 6) -> float | None:
    return None if x is None else round(x, digits)


@dataclass
class ConfigAggregate:
    config_id: str
    strategy: str
    programs: int
    pass_at_k: dict[int, float]
    mean_cost_per_call: float
    mean_latency_per_call: float
    mean_extra_loc_percent: float | None
    mean_minimized_extra_loc_percent: float | None
    auc: float | None

    def to_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "strategy": self.strategy,
            "programs": self.programs,
            "pass_at_k": {str(k): _round(v) for k, v in sorted(self.pass_at_k.items())},
            "mean_cost_per_call": _round(self.mean_cost_per_call),
            "mean_latency_per_call": _round(self.mean_latency_per_call),
            "mean_extra_loc_percent": _round(self.mean_extra_loc_percent),
            "mean_minimized_extra_loc_percent": _round(self.mean_minimized_extra_loc_percent),
            "auc": _round(self.auc),
        }


@dataclass
class ExperimentReport:
    records: list[RunRecord]
    aggregates: list[ConfigAggregate]
    fit: RegressionFit | None
    auc_overall: float | None
    prompt_fingerprints: dict[str, str]
    loc_convention: str = "L+A"
    incompleteness_caveat: str = (
        "Incomplete labels under-approximate: a failing candidate whose merge "
        "with the manual solution still fails may nevertheless be incomplete."
    )

    def to_dict(self) -> dict:
        fit_dict = None
        if self.fit is not None:
            fit_dict = {
                "betas": {k: _round(v) for k, v in sorted(self.fit.betas.items())},
                "alpha": {k: _round(v) for k, v in sorted(self.fit.alpha.items())},
                "std_errors": {k: _round(v) for k, v in sorted(self.fit.std_errors.items())},
                "wald_p_values": {k: _round(v, 10) for k, v in sorted(self.fit.wald_p_values.items())},
                "converged": self.fit.converged,
                "iterations": self.fit.iterations,
                "log_likelihood": _round(self.fit.log_likelihood),
            }
        return {
            "records": [r.to_dict() for r in self.records],
            "aggregates": [a.to_dict() for a in self.aggregates],
            "regression": fit_dict,
            "auc_overall": _round(self.auc_overall),
            "prompt_fingerprints": dict(sorted(self.prompt_fingerprints.items())),
            "loc_convention": self.loc_convention,
            "incompleteness_caveat": self.incompleteness_caveat,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def summary_table(self) -> str:
        headers = ["config", "strategy", "p@1", "p@5", "p@10", "cost/call", "time/call", "extra LOC %"]
        rows = []
        for agg in self.aggregates:
            rows.append(
                [
                    agg.config_id,
                    agg.strategy,
                    _fmt_pct(agg.pass_at_k.get(1)),
                    _fmt_pct(agg.pass_at_k.get(5)),
                    _fmt_pct(agg.pass_at_k.get(10)),
                    f"{agg.mean_cost_per_call:.4f}",
                    f"{agg.mean_latency_per_call:.2f}s",
                    "-" if agg.mean_extra_loc_percent is None else f"{agg.mean_extra_loc_percent:.1f}%",
                ]
            )
        widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for row in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        if self.auc_overall is not None:
            lines.append("")
            lines.append(f"overall AUC: {self.auc_overall:.3f}")
        if self.fit is not None:
            lines.append(
                "difficulty fit: "
                + ", ".join(f"beta_{k}={v:+.4f}" for k, v in sorted(self.fit.betas.items()))
            )
        return "\n".join(lines)


def _fmt_pct(x: float | None) -> str:
    return "-" if x is None else f"{100 * x:.1f}%"


def _strategy_cap(strategy: str) -> int:
    return 5 if strategy == "direct" else 10


def build_feature_rows(
    entries: Sequence[DatasetEntry], records: Sequence[RunRecord], configs: Mapping[str, RunConfig]
) -> list[FeatureRow]:
    by_id = {e.id: e for e in entries}
    rows = []
    for record in records:
        entry = by_id.get(record.program_id)
        if entry is None:
            continue
        cfg = configs.get(record.config_id)
        cap = _strategy_cap(cfg.strategy) if cfg else 10
        first = _first_success(record.attempts)
        rows.append(
            FeatureRow(
                program_id=record.program_id,
                config_id=record.config_id,
                L=entry.features.L,
                A=entry.features.A,
                H=entry.features.H,
                outcome=int(first is not None and first <= cap),
            )
        )
    return rows


def aggregate(
    entries: Sequence[DatasetEntry],
    records: Sequence[RunRecord],
    configs: Sequence[RunConfig],
    k_max: int = 10,
) -> ExperimentReport:
    records = sorted(records, key=lambda r: (r.config_id, r.program_id))
    config_map = {c.config_id: c for c in configs}
    aggregates: list[ConfigAggregate] = []

    rows = build_feature_rows(entries, records, config_map)
    fit: RegressionFit | None = None
    auc_overall: float | None = None
    try:
        fit = fit_logistic(rows)
        scores = [fit.predict(r) for r in rows]
        auc_overall = roc_auc(scores, [r.outcome for r in rows])
    except (SingleClass, ValueError):
        log.info("regression skipped: outcomes not diverse enough")

    for config_id in sorted({r.config_id for r in records}):
        sub = [r for r in records if r.config_id == config_id]
        cfg = config_map.get(config_id)
        strategy = cfg.strategy if cfg else "repair"
        attempt_lists = [r.attempts for r in sub]
        all_attempts = [a for r in sub for a in r.attempts]
        n_calls = len(all_attempts) or 1
        extra = [r.extra_loc_percent for r in sub if r.extra_loc_percent is not None]
        extra_min = [
            r.minimized_extra_loc_percent for r in sub if r.minimized_extra_loc_percent is not None
        ]
        auc_cfg: float | None = None
        if fit is not None:
            cfg_rows = [r for r in rows if r.config_id == config_id]
            try:
                auc_cfg = roc_auc([fit.predict(r) for r in cfg_rows], [r.outcome for r in cfg_rows])
            except (SingleClass, ValueError):
                pass
        aggregates.append(
            ConfigAggregate(
                config_id=config_id,
                strategy=strategy,
                programs=len(sub),
                pass_at_k={k: pass_at_k(attempt_lists, k) for k in range(1, k_max + 1)},
                mean_cost_per_call=sum(a.cost for a in all_attempts) / n_calls,
                mean_latency_per_call=sum(a.llm_latency_s for a in all_attempts) / n_calls,
                mean_extra_loc_percent=(sum(extra) / len(extra)) if extra else None,
                mean_minimized_extra_loc_percent=(sum(extra_min) / len(extra_min)) if extra_min else None,
                auc=auc_cfg,
            )
        )

    return ExperimentReport(
        records=records,
        aggregates=aggregates,
        fit=fit,
        auc_overall=auc_overall,
        prompt_fingerprints=prompt_fingerprints(),
    )


def run_experiment(
    entries: Sequence[DatasetEntry],
    configs: Sequence[RunConfig],
    workspace: str | Path,
    workers: int = 4,
    k_max: int = 10,
    make_provider: Callable[[ProviderConfig], Provider] = build_provider,
    progress: Callable[[str], None] | None = None,
) -> ExperimentReport:
    """Execute every (program, config) pair; resumes from persisted records."""
    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    store = RecordStore(workspace / "records.jsonl")
    cache = VerificationCache(workspace / "verify_cache.jsonl")

    for cfg in configs:
        if not cfg.config_id:
            raise ValueError("every RunConfig needs a config_id for record keeping")

    existing = store.load()
    done = {(r.config_id, r.program_id) for r in existing}
    jobs = [
        (cfg, entry)
        for cfg in configs
        for entry in entries
        if (cfg.config_id, entry.id) not in done
    ]
    say = progress or (lambda msg: log.info("%s", msg))

    def execute(cfg: RunConfig, entry: DatasetEntry) -> RunRecord:
        runner = Runner(cfg, cache=cache, make_provider=make_provider, manual_text=entry.manual_text)
        solve = runner.run(entry.stripped_text)
        extra = minimized_extra = None
        if solve.solved and solve.final_program:
            extra = extra_loc_percent(solve.final_program, entry.manual_text)
            if solve.minimized_program:
                minimized_extra = extra_loc_percent(solve.minimized_program, entry.manual_text)
        return RunRecord(
            program_id=entry.id,
            config_id=cfg.config_id,
            solved=solve.solved,
            attempts=solve.attempts,
            extra_loc_percent=extra,
            minimized_extra_loc_percent=minimized_extra,
            negative_tests_passed=solve.negative_tests_passed,
        )

    records = list(existing)
    if jobs:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            futures = {pool.submit(execute, cfg, entry): (cfg, entry) for cfg, entry in jobs}
            for future in as_completed(futures):
                cfg, entry = futures[future]
                record = future.result()
                store.append(record)  # single-writer: only this loop appends
                records.append(record)
                say(f"{cfg.config_id}/{entry.id}: {'solved' if record.solved else 'unsolved'}")

    return aggregate(entries, records, configs, k_max=k_max)
