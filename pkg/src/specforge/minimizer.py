"""Shrink a verifying extended program back toward the original.

Given an original program and a verifying extension of it (extra clauses,
assertions, helper declarations), repeatedly delete generated segments while
the verifier keeps succeeding, never touching any original line. Works in
rounds over an ordered candidate set, traversed bottom-to-top and
outside-in, with dependency-based eligibility pruning and removal of helper
declarations that lose their last reference.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Protocol

from .source_model import (
    Declaration,
    DeclKind,
    SourceFile,
    Span,
    Statement,
    body_statements,
    normalized_lines,
    parse,
)
from .verifier import VerificationOutcome, VerificationStatus

log = logging.getLogger(__name__)

_IDENT_RE = re.compile(r"[A-Za-z_?'][A-Za-z0-9_?']*")


class OriginalNotContained(Exception):
    """Some original line has no counterpart in the extended program."""

    def __init__(self, unmatched: list[tuple[int, str]]):
        self.unmatched = unmatched
        preview = "; ".join(f"line {ln}: {txt!r}" for ln, txt in unmatched[:3])
        super().__init__(f"{len(unmatched)} original line(s) not found in extension ({preview})")


@dataclass
class DeltaAlignment:
    """Line-level alignment of original against extended text.

    ``pairs`` lists every comparable (non-blank, non-comment) extended line
    with the original line it matches, or None when inserted. Monotone in
    both coordinates.
    """

    pairs: list[tuple[int | None, int]]
    inserted_runs: list[Span]
    unmatched_original: list[tuple[int, str]]

    def inserted_lines(self) -> set[int]:
        return {ext for orig, ext in self.pairs if orig is None}


def _comparable(norm: list[str]) -> list[tuple[int, str]]:
    return [(i + 1, t) for i, t in enumerate(norm) if t]


def _lcs_matches(a: list[str], b: list[str]) -> list[tuple[int, int]]:
    """LCS match pairs (0-based indices into a and b), earliest-first."""
    n, m = len(a), len(b)
    # dp[i][j] = LCS length of a[i:], b[j:]
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row = dp[i]
        nxt = dp[i + 1]
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = nxt[j + 1] + 1
            else:
                row[j] = max(nxt[j], row[j + 1])
    matches = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j] and dp[i][j] == dp[i + 1][j + 1] + 1:
            matches.append((i, j))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            i += 1
        else:
            j += 1
    return matches


def align_lines(original_text: str, extended_text: str) -> DeltaAlignment:
    """Whitespace/attribute/comment-insensitive LCS alignment (never raises)."""
    orig_norm = normalized_lines(original_text)
    ext_norm = normalized_lines(extended_text)
    orig_cmp = _comparable(orig_norm)
    ext_cmp = _comparable(ext_norm)
    matches = _lcs_matches([t for _, t in orig_cmp], [t for _, t in ext_cmp])

    matched_orig = {orig_cmp[i][0] for i, _ in matches}
    ext_to_orig = {ext_cmp[j][0]: orig_cmp[i][0] for i, j in matches}

    pairs: list[tuple[int | None, int]] = []
    for ext_ln, _ in ext_cmp:
        pairs.append((ext_to_orig.get(ext_ln), ext_ln))

    unmatched_original = [(ln, txt) for ln, txt in orig_cmp if ln not in matched_orig]

    runs: list[Span] = []
    run_start: int | None = None
    run_end: int | None = None
    for orig_ln, ext_ln in pairs:
        if orig_ln is None:
            if run_start is None:
                run_start = ext_ln
            run_end = ext_ln
        else:
            if run_start is not None:
                runs.append(Span(run_start, 1, run_end, 1))
                run_start = run_end = None
    if run_start is not None:
        runs.append(Span(run_start, 1, run_end, 1))

    return DeltaAlignment(pairs=pairs, inserted_runs=runs, unmatched_original=unmatched_original)


def compute_delta(original_text: str, extended_text: str) -> DeltaAlignment:
    """Alignment that insists every original line is present in the extension."""
    delta = align_lines(original_text, extended_text)
    if delta.unmatched_original:
        raise OriginalNotContained(delta.unmatched_original)
    return delta


# ---------------------------------------------------------------------------
# Removal candidates


CATEGORY_STATEMENT = "a-statement"
CATEGORY_BLOCK_PART = "b-block-part"
CATEGORY_GROUP = "c-statement-group"
CATEGORY_LOOP_CLAUSE = "d-loop-spec-clause"
CATEGORY_DECL_CLAUSE = "e-decl-spec-clause"
CATEGORY_UNREFERENCED = "unreferenced-decl"

_LOOP_CLAUSE_KINDS = ("invariant", "decreases", "modifies")
_DECL_CLAUSE_KINDS = ("requires", "ensures", "reads", "decreases", "modifies")


@dataclass
class CandidateSegment:
    category: str
    span: Span
    owner_decl: str
    depth: int
    replacement: str | None = None
    in_header: bool = False


def _span_lines_inserted(span: Span, inserted: set[int], lines: list[str]) -> bool:
    code_lines = [ln for ln in span.lines() if _is_code_line(lines, ln)]
    if not code_lines:
        return False
    return all(ln in inserted for ln in code_lines)


def _is_code_line(norm: list[str], ln: int) -> bool:
    return 1 <= ln <= len(norm) and bool(norm[ln - 1])


def _statement_candidates(
    stmts: list[Statement],
    inserted: set[int],
    norm: list[str],
    owner: str,
    raw_lines: list[str],
    out: list[CandidateSegment],
) -> None:
    run: list[Statement] = []

    def flush_run() -> None:
        if len(run) >= 2:
            span = Span(run[0].span.start_line, 1, run[-1].span.end_line, run[-1].span.end_col)
            out.append(CandidateSegment(CATEGORY_GROUP, span, owner, run[0].depth))
        run.clear()

    for stmt in stmts:
        fully_inserted = _span_lines_inserted(stmt.span, inserted, norm)
        single_line = stmt.span.start_line == stmt.span.end_line
        if fully_inserted:
            if single_line:
                if run and run[-1].span.end_line < stmt.span.start_line - _gap_allowance(
                    norm, run[-1].span.end_line, stmt.span.start_line
                ):
                    flush_run()
                run.append(stmt)
            else:
                flush_run()
            out.append(CandidateSegment(CATEGORY_STATEMENT, stmt.span, owner, stmt.depth))
        else:
            flush_run()

        if stmt.else_span is not None and _span_lines_inserted(stmt.else_span, inserted, norm):
            replacement = None
            if stmt.else_junction_col is not None:
                head = raw_lines[stmt.else_span.start_line - 1][: stmt.else_junction_col - 1]
                replacement = head.rstrip()
            out.append(
                CandidateSegment(CATEGORY_BLOCK_PART, stmt.else_span, owner, stmt.depth, replacement)
            )
        if stmt.by_span is not None and _span_lines_inserted(stmt.by_span, inserted, norm):
            first = raw_lines[stmt.span.start_line - 1]
            if stmt.by_span.start_line == stmt.span.start_line and stmt.by_col is not None:
                head = first[: stmt.by_col - 1].rstrip()
            else:
                head = first.rstrip()
            span = Span(stmt.span.start_line, 1, stmt.span.end_line, stmt.span.end_col)
            out.append(
                CandidateSegment(CATEGORY_BLOCK_PART, span, owner, stmt.depth, head + ";")
            )
        if stmt.children and not single_line:
            _statement_candidates(stmt.children, inserted, norm, owner, raw_lines, out)


def _gap_allowance(norm: list[str], prev_end: int, nxt_start: int) -> int:
    # blank/comment lines between two single-line statements keep the group
    gap = 0
    for ln in range(prev_end + 1, nxt_start):
        if _is_code_line(norm, ln):
            return -1  # a code line in between always breaks the run
        gap += 1
    return gap + 1


def extract_candidates(delta: DeltaAlignment, extended_file: SourceFile) -> list[CandidateSegment]:
    """Removal candidates from the inserted lines, document order, outer first."""
    inserted = delta.inserted_lines()
    norm = normalized_lines(extended_file.text)
    raw_lines = extended_file.lines
    out: list[CandidateSegment] = []

    for decl in extended_file.declarations:
        if decl.kind in (DeclKind.METHOD, DeclKind.LEMMA) and decl.body_span is not None:
            stmts = body_statements(extended_file, decl)
            _statement_candidates(stmts, inserted, norm, decl.name, raw_lines, out)
        for clause in decl.clauses:
            if clause.is_negative_test:
                continue
            is_loop_clause = ":loop" in clause.owner
            if is_loop_clause and clause.kind in _LOOP_CLAUSE_KINDS:
                if _span_lines_inserted(clause.span, inserted, norm):
                    out.append(
                        CandidateSegment(CATEGORY_LOOP_CLAUSE, clause.span, decl.name, depth=1)
                    )
            elif (
                not is_loop_clause
                and clause.kind in _DECL_CLAUSE_KINDS
                and clause.span.end_line <= decl.header_span.end_line
            ):
                if _span_lines_inserted(clause.span, inserted, norm):
                    out.append(
                        CandidateSegment(
                            CATEGORY_DECL_CLAUSE, clause.span, decl.name, depth=0, in_header=True
                        )
                    )

    seen: set[tuple[str, int, int]] = set()
    unique: list[CandidateSegment] = []
    for cand in out:
        key = (cand.category, cand.span.start_line, cand.span.end_line)
        if key in seen:
            continue
        seen.add(key)
        unique.append(cand)
    unique.sort(key=lambda c: (c.span.start_line, -c.span.end_line, c.category))
    return unique


# ---------------------------------------------------------------------------
# Declaration dependencies


@dataclass
class DependencyGraph:
    edges: dict[str, set[str]]
    ref_count: dict[str, int]


def build_dependencies(file: SourceFile) -> DependencyGraph:
    """Identifier-level references between declarations (self-references excluded)."""
    names = {d.name for d in file.declarations if not d.name.startswith("<")}
    edges: dict[str, set[str]] = {d.name: set() for d in file.declarations}
    ref_count: dict[str, int] = {name: 0 for name in names}
    norm = normalized_lines(file.text)

    for decl in file.declarations:
        span = decl.span
        tokens: list[str] = []
        for ln in span.lines():
            if ln <= len(norm):
                tokens.extend(_IDENT_RE.findall(norm[ln - 1]))
        for tok in tokens:
            if tok in names and tok != decl.name:
                edges[decl.name].add(tok)
                ref_count[tok] += 1
    return DependencyGraph(edges=edges, ref_count=ref_count)


# ---------------------------------------------------------------------------
# Minimization driver


class MinimizeVerifier(Protocol):
    def __call__(self, text: str, timeout_s: float, filter_symbol: str | None) -> VerificationOutcome: ...


@dataclass
class MinimizeOptions:
    short_timeout_s: float = 10.0
    use_filter_symbol: bool = True
    check_initial: bool = True
    # optional guard from the prose rule: reject removals that slow down
    # verification of the owning scope by more than this factor
    time_guard_factor: float | None = None
    max_rounds: int = 50


@dataclass
class Removal:
    category: str
    span: Span
    round: int
    text: str


@dataclass
class MinimizeResult:
    text: str
    removals: list[Removal]
    rounds: int
    aborted: bool = False

    @property
    def lines_removed(self) -> int:
        return sum(r.span.end_line - r.span.start_line + 1 for r in self.removals)


class _Cells:
    """Line store with stable ids so deletions don't invalidate later spans."""

    def __init__(self, text: str):
        self._ids = list(range(len(text.split("\n"))))
        self._texts = dict(zip(self._ids, text.split("\n")))

    def text(self) -> str:
        return "\n".join(self._texts[i] for i in self._ids)

    def ids_for_span(self, span: Span) -> list[int]:
        return self._ids[span.start_line - 1 : span.end_line]

    def alive(self, ids: list[int]) -> bool:
        present = set(self._ids)
        return all(i in present for i in ids)

    def preview_remove(self, ids: list[int], replacement: str | None) -> str:
        removed = set(ids)
        out = []
        for i in self._ids:
            if i in removed:
                if replacement is not None and i == ids[0]:
                    out.append(replacement)
                continue
            out.append(self._texts[i])
        return "\n".join(out)

    def text_of(self, ids: list[int]) -> str:
        return "\n".join(self._texts[i] for i in ids if i in self._texts)

    def commit_remove(self, ids: list[int], replacement: str | None) -> None:
        removed = set(ids)
        if replacement is not None:
            self._texts[ids[0]] = replacement
            removed.discard(ids[0])
        self._ids = [i for i in self._ids if i not in removed]
        for i in removed:
            del self._texts[i]

    def line_count(self) -> int:
        return len(self._ids)


def _eligible(
    cand: CandidateSegment,
    round_no: int,
    decl_pos: dict[str, int],
    header_gen: dict[str, int],
    body_gen: dict[str, int],
    deps: DependencyGraph,
) -> bool:
    if round_no == 1:
        return True
    d = cand.owner_decl
    own_gen = max(header_gen.get(d, 0), body_gen.get(d, 0))
    if own_gen >= round_no - 1:
        return True
    cand_pos = cand.span.start_line

    def modified_last_pass(name: str, gen: dict[str, int]) -> bool:
        g = gen.get(name, 0)
        pos = decl_pos.get(name, 0)
        # bottom-up traversal: declarations below were already visited this
        # round, declarations above were last visited in the previous round
        return g == round_no if pos > cand_pos else g == round_no - 1

    for ref in deps.edges.get(d, ()):  # d references ref
        if modified_last_pass(ref, header_gen):
            return True
    if cand.in_header:
        for other, refs in deps.edges.items():
            if d in refs:
                g = max(header_gen.get(other, 0), body_gen.get(other, 0))
                pos = decl_pos.get(other, 0)
                if (g == round_no if pos > cand_pos else g == round_no - 1):
                    return True
    return False


def _sweep_unreferenced(
    cells: _Cells,
    original_text: str,
    removals: list[Removal],
    round_no: int,
) -> bool:
    """Drop helper declarations that nothing references anymore.

    Only declarations made entirely of inserted lines (per the current
    alignment against the original) are eligible; original code is immune.
    Returns True if anything was removed.
    """
    changed = False
    while True:
        current = cells.text()
        file = parse(current)
        deps = build_dependencies(file)
        matched = {ext for orig, ext in align_lines(original_text, current).pairs if orig is not None}
        norm = normalized_lines(current)
        victim: Declaration | None = None
        for decl in file.declarations:
            if decl.name.startswith("<"):
                continue
            if decl.kind not in (
                DeclKind.LEMMA,
                DeclKind.GHOST_FUNCTION,
                DeclKind.GHOST_PREDICATE,
                DeclKind.FUNCTION,
                DeclKind.PREDICATE,
            ):
                continue
            if deps.ref_count.get(decl.name, 0) > 0:
                continue
            code_lines = [ln for ln in decl.span.lines() if ln <= len(norm) and norm[ln - 1]]
            if not code_lines or any(ln in matched for ln in code_lines):
                continue
            victim = decl
            break
        if victim is None:
            return changed
        span = victim.span
        end_line = span.end_line
        # absorb one neighbouring blank line so deletions don't pile up blanks
        if (
            span.start_line > 1
            and not file.lines[span.start_line - 2].strip()
            and end_line < len(file.lines)
            and not file.lines[end_line].strip()
        ):
            end_line += 1
        ids = cells.ids_for_span(Span(span.start_line, 1, end_line, span.end_col))
        text = "\n".join(file.lines[span.start_line - 1 : end_line])
        cells.commit_remove(ids, None)
        removals.append(Removal(CATEGORY_UNREFERENCED, span, round_no, text))
        log.debug("swept unreferenced declaration %s", victim.name)
        changed = True


def minimize(
    original_text: str,
    extended_text: str,
    verify: MinimizeVerifier,
    opts: MinimizeOptions | None = None,
) -> MinimizeResult:
    """Remove generated segments while verification keeps succeeding.

    Raises OriginalNotContained if the extension altered original code, and
    ValueError if the extension does not verify to begin with. A ToolError
    from the verifier aborts the run, keeping the last committed text.
    """
    opts = opts or MinimizeOptions()
    compute_delta(original_text, extended_text)  # containment gate

    if opts.check_initial:
        outcome = verify(extended_text, opts.short_timeout_s, None)
        if outcome.status is VerificationStatus.TOOL_ERROR:
            return MinimizeResult(text=extended_text, removals=[], rounds=0, aborted=True)
        if outcome.status is not VerificationStatus.SUCCESS:
            raise ValueError("extended program does not verify; nothing to minimize")

    cells = _Cells(extended_text)
    removals: list[Removal] = []
    header_gen: dict[str, int] = {}
    body_gen: dict[str, int] = {}
    baseline_time: dict[str, float] = {}

    round_no = 0
    while round_no < opts.max_rounds:
        round_no += 1
        current_text = cells.text()
        delta = align_lines(original_text, current_text)
        file = parse(current_text)
        candidates = extract_candidates(delta, file)
        decl_pos = {d.name: d.span.start_line for d in file.declarations}
        deps = build_dependencies(file)

        # bind spans to stable ids before anything moves
        bound = [(cand, cells.ids_for_span(cand.span)) for cand in candidates]
        bound.sort(key=lambda b: (-b[0].span.end_line, b[0].span.start_line, b[0].category))

        committed = 0
        for cand, ids in bound:
            if not cells.alive(ids):
                continue
            if not _eligible(cand, round_no, decl_pos, header_gen, body_gen, deps):
                continue
            tentative = cells.preview_remove(ids, cand.replacement)
            filter_symbol = (
                cand.owner_decl
                if opts.use_filter_symbol and not cand.in_header and not cand.owner_decl.startswith("<")
                else None
            )
            outcome = verify(tentative, opts.short_timeout_s, filter_symbol)
            if outcome.status is VerificationStatus.TOOL_ERROR:
                return MinimizeResult(text=cells.text(), removals=removals, rounds=round_no, aborted=True)
            if outcome.status is not VerificationStatus.SUCCESS:
                continue  # timeouts count as rejection
            if opts.time_guard_factor is not None:
                scope = cand.owner_decl
                base = baseline_time.get(scope)
                if base is None:
                    # lazy per-scope baseline: how long the current text takes
                    base = verify(cells.text(), opts.short_timeout_s, filter_symbol).elapsed_s
                    baseline_time[scope] = base
                if base > 0 and outcome.elapsed_s > base * opts.time_guard_factor:
                    continue
                baseline_time[scope] = outcome.elapsed_s

            removed_text = cells.text_of(ids)
            cells.commit_remove(ids, cand.replacement)
            removals.append(Removal(cand.category, cand.span, round_no, removed_text))
            committed += 1
            if cand.in_header:
                header_gen[cand.owner_decl] = round_no
            else:
                body_gen[cand.owner_decl] = round_no
            _sweep_unreferenced(cells, original_text, removals, round_no)

        if committed == 0:
            break

    return MinimizeResult(text=cells.text(), removals=removals, rounds=round_no)
