import pytest

from specforge.source_model import count_loc, parse
from specforge.source_model import test_oracle_asserts as oracle_asserts
from specforge.strip_merge import (
    NoCodeBlock,
    NoSuchMarker,
    SkeletonMismatch,
    activate_negative_test,
    count_negative_tests,
    detect_cheating,
    extract_code_block,
    merge_with_manual,
    relocate_invariants,
    strip_annotations,
)


def norm_lines(text):
    from specforge.source_model import normalized_lines

    return [t for t in normalized_lines(text) if t]


class TestStrip:
    def test_idempotent_on_all_corpus_files(self, corpus_texts):
        for pid, text in corpus_texts.items():
            once = strip_annotations(parse(text))
            twice = strip_annotations(parse(once))
            assert once == twice, pid

    def test_already_stripped_unchanged(self, binsearch_text):
        once = strip_annotations(parse(binsearch_text))
        assert strip_annotations(parse(once)) == once

    def test_binsearch_shape(self, binsearch_text):
        stripped = parse(strip_annotations(parse(binsearch_text)))
        names = {d.name: d for d in stripped.declarations}
        assert "IsSorted" not in names
        assert "BinarySearch" in names and "TestBinarySearch" in names
        assert not any(
            c.kind in ("requires", "ensures", "invariant") for c in stripped.clauses()
        )
        # oracles preserved verbatim, helpers gone
        assert sorted(c.text.strip() for c in oracle_asserts(stripped)) == [
            "assert idx == -1;",
            "assert idx == 2;",
        ]
        assert "// helper" not in stripped.text
        assert "//@invalid" in stripped.text

    def test_lemma_removed(self, corpus_texts):
        stripped = parse(strip_annotations(parse(corpus_texts["factorial"])))
        assert stripped.find_declaration("FactPositive") is None
        assert stripped.find_declaration("Fact") is None
        assert "FactPositive(n);" not in stripped.text

    def test_executable_lines_preserved(self, corpus_texts):
        for pid, text in corpus_texts.items():
            file = parse(text)
            stripped = strip_annotations(file)
            before = count_loc(file)
            after = count_loc(parse(stripped))
            assert after.L == before.L, pid

    def test_oracles_set_equal_after_strip(self, corpus_texts):
        for pid, text in corpus_texts.items():
            file = parse(text)
            stripped = parse(strip_annotations(file))
            before = sorted(" ".join(c.text.split()) for c in oracle_asserts(file))
            after = sorted(" ".join(c.text.split()) for c in oracle_asserts(stripped))
            assert before == after, pid

    def test_comments_preserved(self, binsearch_text):
        stripped = strip_annotations(parse(binsearch_text))
        assert "// Exercises BinarySearch on a small sorted array." in stripped


class TestExtract:
    def test_plain_tags(self):
        assert extract_code_block("BEGIN DAFNY\nmethod M(){}\nEND DAFNY") == "method M(){}"

    def test_prose_around_tags(self):
        out = extract_code_block(
            "Sure, here's the code:\n\nBEGIN DAFNY\nmethod M()\n{\n}\nEND DAFNY\n\nHope it helps!"
        )
        assert out == "method M()\n{\n}"

    def test_fenced_fallback(self):
        assert extract_code_block("```dafny\nmethod M(){}\n```") == "method M(){}"

    def test_no_block(self):
        with pytest.raises(NoCodeBlock):
            extract_code_block("I can't produce that program.")

    def test_missing_end_tag_tolerated(self):
        assert extract_code_block("BEGIN DAFNY\nmethod M(){}") == "method M(){}"


class TestRelocate:
    def test_well_placed_unchanged(self, binsearch_text):
        assert relocate_invariants(binsearch_text) == binsearch_text

    def test_invariant_after_open_brace(self):
        bad = "method M(n: nat)\n{\n  var i := 0;\n  while i < n {\n    invariant 0 <= i <= n\n    i := i + 1;\n  }\n}"
        fixed = relocate_invariants(bad)
        file = parse(fixed)
        invariants = [c for c in file.clauses() if c.kind == "invariant"]
        assert len(invariants) == 1
        assert invariants[0].owner == "M:loop1"
        lines = fixed.split("\n")
        assert lines[3].strip() == "while i < n"
        assert lines[4].strip() == "invariant 0 <= i <= n"
        assert lines[5].strip() == "{"

    def test_trailing_invariant_after_body(self):
        bad = "method M(n: nat)\n{\n  var i := 0;\n  for k := 0 to n\n  {\n    i := i + 1;\n  }\n  invariant i == n\n}"
        fixed = relocate_invariants(bad)
        file = parse(fixed)
        invariants = [c for c in file.clauses() if c.kind == "invariant"]
        assert invariants and invariants[0].owner == "M:loop1"

    def test_nested_loop_invariants_untouched(self):
        text = (
            "method M(n: nat)\n{\n  var i := 0;\n  while i < n\n    invariant 0 <= i <= n\n  {\n"
            "    var j := 0;\n    while j < i\n      invariant 0 <= j <= i\n    {\n      j := j + 1;\n    }\n"
            "    i := i + 1;\n  }\n}"
        )
        assert relocate_invariants(text) == text


class TestDetectCheating:
    @pytest.fixture
    def stripped_binsearch(self, binsearch_text):
        return parse(strip_annotations(parse(binsearch_text)))

    def test_pure_annotation_additions_clean(self, binsearch_text, stripped_binsearch):
        assert detect_cheating(stripped_binsearch, parse(binsearch_text)) == []

    def test_assume_flagged(self, stripped_binsearch):
        cheater = parse(stripped_binsearch.text.replace("var lo := 0;", "assume false;\n  var lo := 0;"))
        kinds = [v.kind for v in detect_cheating(stripped_binsearch, cheater)]
        assert kinds == ["assume"]

    def test_decreases_star_flagged(self, stripped_binsearch):
        cheater = parse(
            stripped_binsearch.text.replace("while lo < hi", "while lo < hi\n    decreases *")
        )
        kinds = [v.kind for v in detect_cheating(stripped_binsearch, cheater)]
        assert kinds == ["decreases-star"]

    def test_removed_oracle_flagged(self, stripped_binsearch):
        cheater = parse(stripped_binsearch.text.replace("  assert idx == 2;\n", ""))
        kinds = [v.kind for v in detect_cheating(stripped_binsearch, cheater)]
        assert kinds == ["removed-test-assertion"]

    def test_altered_oracle_flagged(self, stripped_binsearch):
        cheater = parse(stripped_binsearch.text.replace("assert idx == 2;", "assert idx >= 0;"))
        kinds = [v.kind for v in detect_cheating(stripped_binsearch, cheater)]
        assert "removed-test-assertion" in kinds

    def test_altered_body_flagged(self, stripped_binsearch):
        cheater = parse(stripped_binsearch.text.replace("return -1;", "return 0;"))
        kinds = {v.kind for v in detect_cheating(stripped_binsearch, cheater)}
        assert kinds == {"altered-body"}

    def test_whitespace_and_attributes_tolerated(self, stripped_binsearch):
        reformatted = stripped_binsearch.text.replace("  var lo := 0;", "    var   lo := 0;")
        reformatted = reformatted.replace("method BinarySearch", "method {:vcs_split_on_every_assert} BinarySearch")
        assert detect_cheating(stripped_binsearch, parse(reformatted)) == []

    def test_oracle_strengthened_with_by_block_ok(self, stripped_binsearch):
        candidate = parse(
            stripped_binsearch.text.replace("assert idx == 2;", "assert idx == 2 by { assert true; }")
        )
        kinds = [v.kind for v in detect_cheating(stripped_binsearch, candidate)]
        assert "removed-test-assertion" not in kinds


class TestMerge:
    def test_identity(self, corpus_texts):
        for pid, text in corpus_texts.items():
            manual = parse(text)
            assert merge_with_manual(manual, manual) == text, pid

    def test_identity_clause_multiset(self, binsearch_text):
        manual = parse(binsearch_text)
        merged = parse(merge_with_manual(manual, manual))
        before = sorted(" ".join(c.text.split()) for c in manual.clauses())
        after = sorted(" ".join(c.text.split()) for c in merged.clauses())
        assert before == after

    def test_missing_ensures_appended_last(self, binsearch_text):
        manual = parse(binsearch_text)
        candidate = parse(
            binsearch_text.replace(
                "  ensures idx == -1 ==> forall i :: 0 <= i < a.Length ==> a[i] != x\n", ""
            )
        )
        merged = parse(merge_with_manual(candidate, manual))
        decl = merged.find_declaration("BinarySearch")
        header = [c for c in decl.clauses if c.kind in ("requires", "ensures")]
        assert [c.kind for c in header] == ["requires", "ensures", "ensures"]
        assert "idx == -1" in header[-1].text

    def test_missing_invariant_merged_into_loop(self, corpus_texts):
        manual = parse(corpus_texts["double_all"])
        candidate = parse(corpus_texts["double_all"].replace("    invariant |r| == i\n", ""))
        merged = parse(merge_with_manual(candidate, manual))
        invariants = [c for c in merged.clauses() if c.kind == "invariant"]
        assert len(invariants) == 3
        assert all(c.owner == "DoubleAll:loop1" for c in invariants)

    def test_missing_helper_declaration_appended(self, corpus_texts):
        manual = parse(corpus_texts["factorial"])
        # candidate solved without the helper lemma (and without its call)
        cand_text = corpus_texts["factorial"].replace(
            "// Shows factorials are at least one.\nlemma FactPositive(n: nat)\n  ensures Fact(n) >= 1\n{\n  if n != 0 {\n    FactPositive(n - 1);\n  }\n}\n\n",
            "",
        ).replace("  FactPositive(n); // helper\n", "")
        candidate = parse(cand_text)
        assert candidate.find_declaration("FactPositive") is None
        merged = parse(merge_with_manual(candidate, manual))
        assert merged.find_declaration("FactPositive") is not None

    def test_renamed_method_mismatch(self, binsearch_text):
        manual = parse(binsearch_text)
        candidate = parse(binsearch_text.replace("BinarySearch", "FindIndex"))
        with pytest.raises(SkeletonMismatch):
            merge_with_manual(candidate, manual)


class TestActivateNegative:
    def test_no_markers(self):
        with pytest.raises(NoSuchMarker):
            activate_negative_test("method M() {\n}", 1)

    def test_activation_pattern(self, binsearch_text):
        activated = activate_negative_test(binsearch_text, 1)
        changed = [
            (a, b) for a, b in zip(binsearch_text.split("\n"), activated.split("\n")) if a != b
        ]
        assert len(changed) == 1
        before, after = changed[0]
        assert before.strip() == "// assert idx == 0; //@invalid"
        assert after.strip() == "assert idx == 0; //@invalid"

    def test_second_of_two_markers(self):
        text = (
            "method TestX()\n{\n  var x := 1;\n  assert x == 1;\n"
            "  // assert x == 0; //@invalid\n  // assert x == 2; //@invalid\n}"
        )
        assert count_negative_tests(text) == 2
        activated = activate_negative_test(text, 2)
        lines = activated.split("\n")
        assert lines[4].strip().startswith("//")
        assert lines[5].strip() == "assert x == 2; //@invalid"

    def test_changes_exactly_one_line(self, corpus_texts):
        for text in corpus_texts.values():
            total = count_negative_tests(text)
            for index in range(1, total + 1):
                activated = activate_negative_test(text, index)
                diff = [
                    1 for a, b in zip(text.split("\n"), activated.split("\n")) if a != b
                ]
                assert sum(diff) == 1


class TestRobustExtraction:
    def test_fence_inside_tags(self):
        raw = "BEGIN DAFNY\n```dafny\nmethod M()\n{\n}\n```\nEND DAFNY"
        assert extract_code_block(raw) == "method M()\n{\n}"

    def test_multiline_clause_stripped_whole(self):
        text = (
            "method M(n: nat) returns (r: nat)\n"
            "  ensures r == n +\n"
            "          n\n"
            "{\n"
            "  r := n + n;\n"
            "}"
        )
        stripped = strip_annotations(parse(text))
        assert "ensures" not in stripped and "          n" not in stripped
        assert strip_annotations(parse(stripped)) == stripped
