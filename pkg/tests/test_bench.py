import json
import random
from pathlib import Path

import pytest

from specforge.bench import (
    DatasetEntry,
    ManifestError,
    RecordStore,
    RunRecord,
    aggregate,
    extra_loc_percent,
    load_dataset,
    pass_at_k,
    run_experiment,
)
from specforge.gateway import RawResponse, register_scripted_provider, ProviderConfig
from specforge.repair import AttemptRecord, RunConfig
from specforge.verifier import ErrorClass, ScriptedVerifier, VerifierConfig, failure, success

DATA_DIR = Path(__file__).parent / "data"


def attempts(first_success: int | None, total: int) -> list[AttemptRecord]:
    out = []
    for i in range(1, total + 1):
        if first_success is not None and i == first_success:
            cls = ErrorClass.SUCCESS
        else:
            cls = ErrorClass.POTENTIALLY_INCORRECT
        out.append(AttemptRecord(attempt_index=i, kind="direct", provider="p", error_class=cls))
        if cls is ErrorClass.SUCCESS:
            break
    return out


class TestLoadDataset:
    def test_bundled_corpus(self, corpus_root):
        entries = load_dataset(corpus_root)
        assert len(entries) == 6
        categories = {e.id: e.category for e in entries}
        assert categories["binary_search"] == "search"
        for entry in entries:
            assert entry.features.total > 0
            assert entry.stripped_text and "requires" not in entry.stripped_text

    def test_features_match_manifest(self, corpus_root):
        for entry in load_dataset(corpus_root):
            assert entry.manifest_loc is not None
            assert entry.features == entry.manifest_loc, entry.id

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"programs": []}))
        assert load_dataset(tmp_path) == []

    def test_missing_file_is_manifest_error(self, tmp_path):
        (tmp_path / "manifest.json").write_text(
            json.dumps({"programs": [{"id": "ghost", "category": "math", "file": "programs/ghost.dfy"}]})
        )
        with pytest.raises(ManifestError) as err:
            load_dataset(tmp_path)
        assert "ghost" in str(err.value)

    def test_no_manifest(self, tmp_path):
        with pytest.raises(ManifestError):
            load_dataset(tmp_path)

    def test_unknown_category(self, tmp_path):
        (tmp_path / "p.dfy").write_text("method M() {\n}")
        (tmp_path / "manifest.json").write_text(
            json.dumps({"programs": [{"id": "p", "category": "sorting", "file": "p.dfy"}]})
        )
        with pytest.raises(ManifestError):
            load_dataset(tmp_path)


class TestPassAtK:
    def test_all_unsolved(self):
        records = {f"p{i}": attempts(None, 5) for i in range(4)}
        for k in range(1, 11):
            assert pass_at_k(records, k) == 0.0

    def test_53_of_110_at_first_attempt(self):
        records = {}
        for i in range(110):
            records[f"p{i:03d}"] = attempts(1 if i < 53 else None, 5)
        assert pass_at_k(records, 1) == 53 / 110
        assert abs(pass_at_k(records, 1) - 0.4818181818) < 1e-9

    def test_table_consistency_63_of_110_is_57_3_percent(self):
        # 63 successes within five attempts reproduces the 57.3% aggregate
        records = {}
        for i in range(110):
            first = (i % 5) + 1 if i < 63 else None
            records[f"p{i:03d}"] = attempts(first, 5)
        value = pass_at_k(records, 5)
        assert value == 63 / 110
        assert f"{100 * value:.1f}" == "57.3"

    def test_monotone_and_matches_bruteforce_on_random_sets(self):
        rng = random.Random(1234)
        for case in range(50):
            records = {}
            for i in range(rng.randint(1, 30)):
                total = rng.randint(1, 10)
                first = rng.choice([None] + list(range(1, total + 1)))
                records[f"p{i}"] = attempts(first, total)
            previous = 0.0
            for k in range(1, 11):
                value = pass_at_k(records, k)
                brute = sum(
                    1
                    for recs in records.values()
                    if any(
                        a.attempt_index <= k and a.error_class is ErrorClass.SUCCESS
                        for a in recs
                    )
                ) / len(records)
                assert value == brute, (case, k)
                assert value >= previous
                previous = value

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            pass_at_k({}, 0)


class TestExtraLoc:
    def test_identity_zero(self, binsearch_text):
        assert extra_loc_percent(binsearch_text, binsearch_text) == 0.0

    def test_40_to_50_is_25_percent(self):
        manual = "\n".join(f"method M{i}()\n{{\n  var x{i} := {i};\n}}" for i in range(10))
        # manual: 10 methods x 4 lines = 40; solution adds 10 asserts = 50
        solution = manual.replace("}", "  assert true;\n}").replace("  assert true;\n}\n  var", "}\n  var")
        solution = "\n".join(
            f"method M{i}()\n{{\n  var x{i} := {i};\n  assert true;\n}}" for i in range(10)
        )
        assert extra_loc_percent(solution, manual) == 25.0

    def test_batch_mean(self, corpus_texts):
        pairs = []
        for text in corpus_texts.values():
            bloated = text.replace("{\n", "{\n  assert true;\n", 1)
            pairs.append((bloated, text))
        values = [extra_loc_percent(s, m) for s, m in pairs]
        expected = sum(values) / len(values)
        assert expected == pytest.approx(sum(values) / len(values))
        assert all(v > 0 for v in values)


def _solver_provider(name: str, fail_for: str | None = None):
    """Echoes the request program plus a helper lemma; optionally refuses one program."""

    def fn(messages, cfg):
        content = messages[1]["content"]
        program = content.split("BEGIN DAFNY\n", 1)[1].rsplit("\nEND DAFNY", 1)[0]
        if "BEGIN VERIFICATION ERRORS" in program:
            program = program.split("\n\nBEGIN VERIFICATION ERRORS")[0]
        if fail_for and fail_for in program:
            return RawResponse(text="cannot help with that")
        solved = program + "\n\nlemma AutoNote()\n  ensures 0 <= 0\n{\n}\n"
        return RawResponse(text=f"BEGIN DAFNY\n{solved}\nEND DAFNY", input_tokens=10, output_tokens=20)

    register_scripted_provider(name, fn)
    return ProviderConfig(name=name, kind=f"scripted:{name}", priority=1)


@pytest.fixture
def experiment_setup(corpus_root, mock_verifier):
    sv = ScriptedVerifier(default=failure())
    sv.when_contains("AutoNote", success(obligations=2))
    exe = mock_verifier("bench", sv)
    entries = load_dataset(corpus_root)
    provider_ok = _solver_provider("bench-ok")
    provider_picky = _solver_provider("bench-picky", fail_for="BinarySearch")
    configs = [
        RunConfig(
            strategy="direct",
            providers=[provider_picky],
            verifier=VerifierConfig(executable=exe),
            max_direct_runs=2,
            config_id="cfg-direct",
        ),
        RunConfig(
            strategy="repair",
            providers=[provider_ok],
            verifier=VerifierConfig(executable=exe),
            max_repair_iterations=2,
            config_id="cfg-repair",
        ),
    ]
    return entries, configs


class TestRunExperiment:
    def test_end_to_end_and_persistence(self, experiment_setup, tmp_path):
        entries, configs = experiment_setup
        report = run_experiment(entries, configs, tmp_path, workers=2)
        assert len(report.records) == 12
        by_config = {a.config_id: a for a in report.aggregates}
        assert by_config["cfg-repair"].pass_at_k[1] == 1.0
        assert by_config["cfg-direct"].pass_at_k[1] == 5 / 6  # BinarySearch refused
        stored = RecordStore(tmp_path / "records.jsonl").load()
        assert len(stored) == 12

    def test_resume_skips_done_pairs(self, experiment_setup, tmp_path):
        entries, configs = experiment_setup
        first = run_experiment(entries, configs[:1], tmp_path, workers=1)
        assert len(first.records) == 6
        # second run adds only the second config's pairs
        full = run_experiment(entries, configs, tmp_path, workers=1)
        assert len(full.records) == 12
        stored = RecordStore(tmp_path / "records.jsonl").load()
        assert len(stored) == 12  # no duplicates

    def test_crash_resume_equivalence(self, experiment_setup, tmp_path, mock_verifier):
        entries, configs = experiment_setup

        crashes = {"armed": True}

        def crashing_make(cfg):
            from specforge.gateway import build_provider

            inner = build_provider(cfg)

            class Crashing:
                def complete(self, messages, pcfg):
                    if crashes["armed"] and "Factorial" in messages[1]["content"]:
                        raise RuntimeError("simulated crash")
                    return inner.complete(messages, pcfg)

            return Crashing()

        ws = tmp_path / "crashy"
        with pytest.raises(RuntimeError):
            run_experiment(entries, configs, ws, workers=1, make_provider=crashing_make)
        partial = RecordStore(ws / "records.jsonl").load()
        assert 0 < len(partial) < 12
        crashes["armed"] = False
        report = run_experiment(entries, configs, ws, workers=1, make_provider=crashing_make)
        clean = run_experiment(entries, configs, tmp_path / "clean", workers=1)
        key = lambda r: (r.config_id, r.program_id)
        got = {key(r): (r.solved, len(r.attempts)) for r in report.records}
        want = {key(r): (r.solved, len(r.attempts)) for r in clean.records}
        assert got == want

    def test_zero_configs(self, experiment_setup, tmp_path):
        entries, _ = experiment_setup
        report = run_experiment(entries, [], tmp_path, workers=1)
        assert report.records == [] and report.aggregates == []
        assert report.fit is None

    def test_config_id_required(self, experiment_setup, tmp_path):
        entries, configs = experiment_setup
        bad = RunConfig(strategy="direct", providers=configs[0].providers, verifier=configs[0].verifier)
        with pytest.raises(ValueError):
            run_experiment(entries, [bad], tmp_path)


def synthetic_records() -> list[RunRecord]:
    records = []
    for config_id, offsets in (("cfg-a", (1, 2, None, 1, 3, None)), ("cfg-b", (1, 1, 2, None, 1, 1))):
        for i, first in enumerate(offsets):
            records.append(
                RunRecord(
                    program_id=f"p{i}",
                    config_id=config_id,
                    solved=first is not None,
                    attempts=attempts(first, 4),
                    extra_loc_percent=12.5 if first is not None else None,
                )
            )
    return records


def synthetic_entries() -> list[DatasetEntry]:
    from specforge.source_model import LocStats

    entries = []
    for i in range(6):
        entries.append(
            DatasetEntry(
                id=f"p{i}",
                category="math",
                manual_path=f"p{i}.dfy",
                manual_text="",
                stripped_text="",
                features=LocStats(L=10 + 3 * i, A=4 + 2 * i, H=i % 3),
            )
        )
    return entries


class TestReports:
    def _configs(self):
        return [
            RunConfig(strategy="direct", config_id="cfg-a"),
            RunConfig(strategy="repair", config_id="cfg-b"),
        ]

    def test_aggregate_deterministic(self):
        r1 = aggregate(synthetic_entries(), synthetic_records(), self._configs())
        r2 = aggregate(synthetic_entries(), list(reversed(synthetic_records())), self._configs())
        assert r1.to_json() == r2.to_json()

    def test_golden_report(self):
        report = aggregate(synthetic_entries(), synthetic_records(), self._configs())
        golden_path = DATA_DIR / "golden_report.json"
        assert report.to_json() == golden_path.read_text()

    def test_summary_table_renders(self):
        report = aggregate(synthetic_entries(), synthetic_records(), self._configs())
        table = report.summary_table()
        assert "cfg-a" in table and "cfg-b" in table and "p@5" in table

    def test_aggregates_recomputable_from_records(self):
        report = aggregate(synthetic_entries(), synthetic_records(), self._configs())
        again = aggregate(synthetic_entries(), report.records, self._configs())
        assert report.to_json() == again.to_json()
