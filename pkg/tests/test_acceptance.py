"""Acceptance suite: every release-gating criterion at its stated tolerance.

Run as `pytest tests/test_acceptance.py -v`; the conftest hook prints one
PASS/FAIL line per criterion. Everything runs offline against mock verifiers
and scripted providers; the end-to-end smoke additionally needs a local
Dafny binary and is skipped when absent.
"""

import dataclasses
import math
import random
import shutil
import time

import numpy as np
import pytest

from minimize_cases import cases as minimize_cases
from minimize_cases import norm_set
from minimize_reference import brute_force_minimize, line_multiset

from specforge.bench import extra_loc_percent, load_dataset, pass_at_k
from specforge.minimizer import minimize
from specforge.repair import AttemptRecord, RunConfig, Runner, check_negative_tests
from specforge.source_model import LocStats, count_loc, parse
from specforge.stats import FeatureRow, _design, fit_logistic, gradient, log_likelihood, roc_auc
from specforge.strip_merge import detect_cheating, strip_annotations
from specforge.verifier import (
    Diagnostic,
    ErrorClass,
    ScriptedVerifier,
    VerifierConfig,
    failure,
    success,
)


def oracle_fn(case):
    def verify(text, timeout_s, filter_symbol):
        return success() if case.verifies(text) else failure()

    return verify


class TestCriterion1MinimizerOracleEquivalence:
    def test_line_set_identical_to_brute_force_with_fixpoint(self):
        start = time.monotonic()
        corpus = minimize_cases()
        assert len(corpus) >= 5
        for case in corpus:
            result = minimize(case.original, case.extended, oracle_fn(case))
            reference = brute_force_minimize(case.original, case.extended, case.verifies)
            assert line_multiset(result.text) == line_multiset(reference), case.name
            rerun = minimize(case.original, result.text, oracle_fn(case))
            assert rerun.removals == [], case.name
        elapsed = time.monotonic() - start
        assert elapsed < 10.0, f"criterion 1 must finish in under 10s, took {elapsed:.1f}s"


class TestCriterion2MinimizerSoundnessContainment:
    def test_verifies_contains_original_and_strictly_shrinks(self):
        for case in minimize_cases():
            result = minimize(case.original, case.extended, oracle_fn(case))
            assert case.verifies(result.text), case.name
            assert norm_set(case.original) <= norm_set(result.text), case.name
            for removal in result.removals:
                physical = removal.span.end_line - removal.span.start_line + 1
                replaced = 1 if removal.category == "b-block-part" else 0
                assert physical - replaced >= 1, (case.name, removal)


class TestCriterion3LocAccounting:
    def test_reference_program_exact(self, binsearch_text):
        assert count_loc(parse(binsearch_text)) == LocStats(L=23, A=9, H=2)

    def test_corpus_totals_match_manifest(self, corpus_root, corpus_manifest):
        entries = load_dataset(corpus_root)
        got = sum((e.features for e in entries), LocStats(0, 0, 0))
        want = [e["loc"] for e in corpus_manifest["programs"]]
        totals = LocStats(
            sum(w["L"] for w in want), sum(w["A"] for w in want), sum(w["H"] for w in want)
        )
        assert got == totals
        for entry in entries:
            assert entry.features == entry.manifest_loc, entry.id


def _seeded_cheating_corpus(corpus_texts) -> list[tuple[str, str, str, str]]:
    """(case name, expected kind, stripped text, candidate text) x 12."""
    out = []
    stripped = {pid: strip_annotations(parse(text)) for pid, text in corpus_texts.items()}

    def body_insert(pid, needle, insertion):
        return stripped[pid].replace(needle, insertion + "\n" + needle, 1)

    # three assume insertions
    out.append(("assume-1", "assume", stripped["binary_search"],
                body_insert("binary_search", "  var lo := 0;", "  assume false;")))
    out.append(("assume-2", "assume", stripped["sum_all"],
                body_insert("sum_all", "  total := 0;", "  assume |s| > 0;")))
    out.append(("assume-3", "assume", stripped["double_all"],
                body_insert("double_all", "  r := [];", "  assume |s| < 10;")))
    # three disabled termination checks
    for i, (pid, loop) in enumerate(
        [("binary_search", "while lo < hi"), ("all_positive", "while i < a.Length"),
         ("reverse", "while lo < hi")], start=1):
        out.append((f"decreases-star-{i}", "decreases-star", stripped[pid],
                    stripped[pid].replace(loop, loop + "\n    decreases *", 1)))
    # three deleted oracle assertions
    out.append(("lost-oracle-1", "removed-test-assertion", stripped["binary_search"],
                stripped["binary_search"].replace("  assert idx == 2;\n", "", 1)))
    out.append(("lost-oracle-2", "removed-test-assertion", stripped["sum_all"],
                stripped["sum_all"].replace("  assert t == 10;\n", "", 1)))
    out.append(("lost-oracle-3", "removed-test-assertion", stripped["factorial"],
                stripped["factorial"].replace("assert f == 24;", "assert f >= 0;", 1)))
    # three altered bodies
    out.append(("altered-body-1", "altered-body", stripped["binary_search"],
                stripped["binary_search"].replace("return -1;", "return 0;", 1)))
    out.append(("altered-body-2", "altered-body", stripped["reverse"],
                stripped["reverse"].replace("  lo := lo + 1;\n", "", 1)))
    out.append(("altered-body-3", "altered-body", stripped["double_all"],
                stripped["double_all"].replace("r := r + [2 * s[i]];", "r := r + [3 * s[i]];", 1)))
    assert len(out) == 12
    return out


class TestCriterion4StripAndGuardrails:
    def test_strip_idempotent_on_corpus(self, corpus_texts):
        for pid, text in corpus_texts.items():
            once = strip_annotations(parse(text))
            assert strip_annotations(parse(once)) == once, pid

    def test_cheating_corpus_fully_flagged(self, corpus_texts):
        for name, kind, stripped_text, candidate_text in _seeded_cheating_corpus(corpus_texts):
            violations = detect_cheating(parse(stripped_text), parse(candidate_text))
            assert violations, f"{name}: cheating case not flagged"
            assert any(v.kind == kind for v in violations), (
                name,
                kind,
                [v.kind for v in violations],
            )

    def test_no_false_positives_on_clean_files(self, corpus_texts):
        clean = []
        for pid, text in corpus_texts.items():
            clean.append((pid, f"{pid}-manual", text))
            extra = text.replace("{\n", "{\n  assert true; // extra redundant helper\n", 1)
            clean.append((pid, f"{pid}-augmented", extra))
        assert len(clean) == 12
        for pid, name, candidate_text in clean:
            stripped_text = strip_annotations(parse(corpus_texts[pid]))
            violations = detect_cheating(parse(stripped_text), parse(candidate_text))
            assert violations == [], (name, violations)


STRIPPED = """method M(n: nat) returns (r: nat)
{
  r := n + n;
}

method TestM()
{
  var r := M(3);
  assert r == 6;
}"""
GOOD = STRIPPED.replace(
    "method M(n: nat) returns (r: nat)",
    "method M(n: nat) returns (r: nat)\n  ensures r == 2 * n",
)
WEAK = STRIPPED.replace(
    "method M(n: nat) returns (r: nat)",
    "method M(n: nat) returns (r: nat)\n  ensures r >= n",
)
CHEATER = STRIPPED.replace("r := n + n;", "assume false;\n  r := n + n;")
WEAK_DIAG = Diagnostic("input.dfy", 8, 3, "error", "assertion might not hold", "verification")


class TestCriterion5RepairLoopBookkeeping:
    def _run(self, scripted_provider, mock_verifier, tag, programs):
        provider_cfg, script = scripted_provider(tag, programs)
        sv = ScriptedVerifier(default=success(obligations=4))
        sv.when_contains("ensures r >= n", failure([WEAK_DIAG], verified=2, failed=1))
        exe = mock_verifier(tag, sv)
        cfg = RunConfig(
            strategy="repair", providers=[provider_cfg], verifier=VerifierConfig(executable=exe)
        )
        return Runner(cfg).run_repair(STRIPPED), script

    def test_fail_fail_succeed_embeds_diagnostics_verbatim(self, scripted_provider, mock_verifier):
        result, script = self._run(scripted_provider, mock_verifier, "acc5a", [WEAK, WEAK, GOOD])
        assert result.solved is True
        assert result.first_success_attempt == 3
        request3 = script.received[2][1]["content"]
        golden_errors_block = (
            "BEGIN VERIFICATION ERRORS\n"
            "input.dfy(8,3): error: assertion might not hold\n"
            "END VERIFICATION ERRORS"
        )
        assert golden_errors_block in request3

    def test_cheating_attempt_reverts_to_previous_program(self, scripted_provider, mock_verifier):
        result, script = self._run(scripted_provider, mock_verifier, "acc5b", [WEAK, CHEATER, GOOD])
        assert result.attempts[1].cheating_violations == 1
        request3 = script.received[2][1]["content"]
        program_block = request3.split("BEGIN VERIFICATION ERRORS")[0]
        golden_program_block = f"BEGIN DAFNY\n{WEAK}\nEND DAFNY"
        assert golden_program_block in program_block
        assert result.solved is True

    def test_determinism_of_replayed_run(self, scripted_provider, mock_verifier):
        def normalized(tag):
            result, _ = self._run(scripted_provider, mock_verifier, tag, [WEAK, WEAK, GOOD])
            return [
                dataclasses.replace(a, provider="p", llm_latency_s=0.0, verify_elapsed_s=0.0)
                for a in result.attempts
            ], result.final_program

        assert normalized("acc5c") == normalized("acc5d")


NEG_WEAK = """method Find(x: int) returns (idx: int)
  ensures idx >= -1
{
  idx := x;
}

method TestFind()
{
  var idx := Find(2);
  assert idx == 2;
  // assert idx == 1; //@invalid
  // assert idx == 3; //@invalid
}"""


class TestCriterion6NegativeTestOracle:
    def test_weak_postcondition_reports_exact_marker(self, mock_verifier):
        # weak spec: activating marker 1 still verifies; marker 2 fails
        sv = ScriptedVerifier(default=success())
        sv.when(lambda t: "\n  assert idx == 3;" in t, failure())
        exe = mock_verifier("acc6a", sv)
        cfg = RunConfig(strategy="repair", providers=[], verifier=VerifierConfig(executable=exe))
        outcome = check_negative_tests(NEG_WEAK, cfg)
        passed, failures = outcome
        assert passed is False
        assert [f.marker_index for f in failures] == [1]
        assert failures[0].text == "assert idx == 1; //@invalid"

    def test_correct_case_passes(self, mock_verifier):
        sv = ScriptedVerifier(default=success())
        sv.when(lambda t: "\n  assert idx == 1;" in t, failure())
        sv.when(lambda t: "\n  assert idx == 3;" in t, failure())
        exe = mock_verifier("acc6b", sv)
        cfg = RunConfig(strategy="repair", providers=[], verifier=VerifierConfig(executable=exe))
        outcome = check_negative_tests(NEG_WEAK, cfg)
        passed, failures = outcome
        assert passed is True and failures == []


def _attempts(first, total=10):
    out = []
    for i in range(1, total + 1):
        cls = ErrorClass.SUCCESS if first == i else ErrorClass.POTENTIALLY_INCORRECT
        out.append(AttemptRecord(attempt_index=i, kind="direct", provider="p", error_class=cls))
        if cls is ErrorClass.SUCCESS:
            break
    return out


class TestCriterion7Metrics:
    def test_pass_at_k_brute_force_and_monotone(self):
        rng = random.Random(20250809)
        for case in range(50):
            records = {}
            for i in range(rng.randint(1, 40)):
                total = rng.randint(1, 10)
                first = rng.choice([None] + list(range(1, total + 1)))
                records[f"p{i}"] = _attempts(first, total)
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
                assert value == brute
                assert value >= previous
                previous = value

    def test_extra_loc_hand_arithmetic(self):
        manual = "\n".join(
            f"method M{i}()\n{{\n  var x{i} := {i};\n}}" for i in range(10)
        )  # 40 countable lines
        solution = "\n".join(
            f"method M{i}()\n{{\n  var x{i} := {i};\n  assert true;\n}}" for i in range(10)
        )  # 50 countable lines
        assert extra_loc_percent(solution, manual) == 25.0
        assert extra_loc_percent(manual, manual) == 0.0

    def test_aggregator_reproduces_57_3_percent(self):
        records = {}
        for i in range(110):
            first = (i % 5) + 1 if i < 63 else None
            records[f"p{i:03d}"] = _attempts(first, 5)
        value = pass_at_k(records, 5)
        assert value == 63 / 110
        assert f"{100 * value:.1f}" == "57.3"


class TestCriterion8Statistics:
    def test_roc_and_regression(self):
        start = time.monotonic()

        # exact AUC checks
        assert roc_auc([0.5] * 6, [1, 1, 1, 0, 0, 0]) == 0.5
        assert roc_auc([0.9, 0.8, 0.4, 0.7, 0.3, 0.2], [1, 1, 1, 0, 0, 0]) == pytest.approx(8 / 9)
        rng = np.random.default_rng(77)
        for _ in range(25):
            n = int(rng.integers(4, 30))
            scores = list(np.round(rng.random(n), 2))
            labels = list(rng.integers(0, 2, n))
            if len(set(labels)) < 2:
                continue
            wins = ties = total = 0
            for sp, lp in zip(scores, labels):
                if not lp:
                    continue
                for sn, ln in zip(scores, labels):
                    if ln:
                        continue
                    total += 1
                    wins += sp > sn
                    ties += sp == sn
            assert roc_auc(scores, labels) == pytest.approx((wins + 0.5 * ties) / total)

        # coefficient recovery at the published-magnitude regime, n = 1540
        true = {"L": -0.07, "A": -0.05, "H": -0.58}
        gen = np.random.default_rng(42)
        configs = [f"cfg{j:02d}" for j in range(14)]
        alphas = {c: gen.normal(2.5, 0.8) for c in configs}
        rows = []
        for i in range(110):
            L = int(gen.integers(5, 60))
            A = int(gen.integers(2, 40))
            H = int(gen.integers(0, 8))
            for c in configs:
                eta = alphas[c] + true["L"] * L + true["A"] * A + true["H"] * H
                p = 1.0 / (1.0 + math.exp(-eta))
                rows.append(FeatureRow(f"p{i:03d}", c, L, A, H, int(gen.random() < p)))
        assert len(rows) == 1540
        fit = fit_logistic(rows)
        assert fit.converged
        for name, value in true.items():
            assert abs(fit.betas[name] - value) <= 3 * fit.std_errors[name], name
        assert fit.gradient_norm < 1e-8

        # analytic gradient vs central finite differences (no ridge)
        X, y, _, _ = _design(rows[:300], ("L", "A", "H"))
        beta = np.random.default_rng(0).normal(0, 0.05, X.shape[1])
        analytic = gradient(X, y, beta, ridge=0.0)
        eps = 1e-6
        for j in range(len(beta)):
            up, down = beta.copy(), beta.copy()
            up[j] += eps
            down[j] -= eps
            numeric = (log_likelihood(X, y, up) - log_likelihood(X, y, down)) / (2 * eps)
            assert abs(analytic[j] - numeric) / max(1.0, abs(numeric)) < 1e-6

        elapsed = time.monotonic() - start
        assert elapsed < 30.0, f"criterion 8 must finish in under 30s, took {elapsed:.1f}s"


DAFNY = shutil.which("dafny")


@pytest.mark.skipif(DAFNY is None, reason="criterion 9 needs a local Dafny install")
class TestCriterion9RealVerifierSmoke:
    def test_end_to_end_with_local_dafny(self, corpus_texts, scripted_provider, tmp_path):
        from specforge.verifier import VerificationCache, VerificationStatus, cached_verify

        sample = ["sum_all", "double_all", "all_positive"]
        vcfg = VerifierConfig(executable=DAFNY, timeout_s=60)
        cache = VerificationCache(tmp_path / "cache.jsonl")

        for pid in sample:
            manual = corpus_texts[pid]
            assert cached_verify(manual, vcfg, cache).status is VerificationStatus.SUCCESS, pid

        anchors = {"sum_all": "  total := 0;", "double_all": "  r := [];", "all_positive": "  ok := true;"}
        for pid in sample:
            manual = corpus_texts[pid]
            stripped = strip_annotations(parse(manual))
            provider_cfg, _ = scripted_provider(f"acc9-{pid}", [manual])
            cfg = RunConfig(strategy="repair", providers=[provider_cfg], verifier=vcfg)
            runner = Runner(cfg, cache=cache)
            result = runner.run_repair(stripped)
            assert result.solved, pid
            negative = check_negative_tests(result.final_program, cfg, cache=cache)
            assert negative.passed, pid

            anchor = anchors[pid]
            planted = result.final_program.replace(
                anchor, "  assert true; // planted redundant helper\n" + anchor, 1
            )
            if cached_verify(planted, vcfg, cache).status is VerificationStatus.SUCCESS:
                def verify_fn(text, timeout_s, filter_symbol):
                    return cached_verify(
                        text, vcfg.with_(timeout_s=timeout_s, filter_symbol=filter_symbol), cache
                    )

                minimized = minimize(stripped, planted, verify_fn)
                assert "planted redundant helper" not in minimized.text, pid
