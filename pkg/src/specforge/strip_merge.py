"""Annotation stripping, LLM-output post-processing, guardrails and merging.

strip_annotations turns an annotated program into its conventional form
(oracle test assertions and negative-test comment markers survive).
detect_cheating screens candidates for forbidden shortcuts. merge_with_manual
unions a candidate's clauses with the manual solution's, which lets a failing
candidate be labelled merely incomplete when the union verifies.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

from .minimizer import align_lines
from .source_model import (
    Clause,
    Declaration,
    DeclKind,
    SourceFile,
    normalized_lines,
    test_oracle_asserts,
)

_STRIPPED_CLAUSE_KINDS = frozenset({"requires", "ensures", "invariant", "decreases", "reads"})
_STRIPPED_STATEMENT_KINDS = frozenset({"assert", "assume", "calc", "ghost-var"})
_INVALID_RE = re.compile(r"//@invalid\b")
_COMMENTED_STMT_RE = re.compile(r"^(\s*)//\s?(.*)$")

BEGIN_TAG = "BEGIN DAFNY"
END_TAG = "END DAFNY"


class NoCodeBlock(Exception):
    """The model response contains no recognizable program region."""


class SkeletonMismatch(Exception):
    """Candidate and manual solution differ in their executable skeleton."""


class NoSuchMarker(Exception):
    """Fewer negative-test markers than the requested ordinal."""


@dataclass(frozen=True)
class Violation:
    kind: str  # assume | decreases-star | removed-test-assertion | altered-body
    detail: str
    line: int | None = None


def _norm(text: str) -> str:
    return " ".join(t for t in normalized_lines(text) if t)


def _removed_decl(decl: Declaration) -> bool:
    return decl.is_ghost or decl.kind in (
        DeclKind.LEMMA,
        DeclKind.GHOST_FUNCTION,
        DeclKind.GHOST_PREDICATE,
    )


def strip_annotations(file: SourceFile) -> str:
    """Remove every specification/verification annotation from the file.

    Keeps: executable code, modifies clauses, natural-language comments,
    test-oracle assertions and "//@invalid" negative-test marker lines.
    Removes: requires/ensures/invariant/decreases/reads clauses, lemma and
    ghost declarations whole, assert/assume/calc/ghost-var statements and
    "// helper"-tagged lines (except the preserved oracles and markers).
    """
    lines = file.lines
    n = len(lines)
    delete: set[int] = set()
    cuts: dict[int, list[tuple[int, int]]] = {}
    oracle_spans = {c.span for c in test_oracle_asserts(file)}

    def remove_span(span) -> None:
        for ln in span.lines():
            if ln > n:
                continue
            raw = lines[ln - 1]
            start = span.start_col if ln == span.start_line else 1
            end = span.end_col if ln == span.end_line else len(raw)
            before = raw[: start - 1]
            after = raw[end:]
            after_wo_comment = re.sub(r"//.*$", "", after)
            if not before.strip() and not after_wo_comment.strip():
                delete.add(ln)
            else:
                cuts.setdefault(ln, []).append((start, end))

    for decl in file.declarations:
        if _removed_decl(decl):
            for ln in decl.span.lines():
                delete.add(ln)
            continue
        for clause in decl.clauses:
            if clause.is_negative_test:
                continue
            if clause.span in oracle_spans:
                continue
            if clause.kind in _STRIPPED_CLAUSE_KINDS or clause.kind in _STRIPPED_STATEMENT_KINDS:
                remove_span(clause.span)

    # helper-tagged code lines not caught above (e.g. tagged lemma calls)
    from .source_model import _scan_lines  # shared line scanner

    scanned = _scan_lines(file.text)
    for idx, line in enumerate(scanned, start=1):
        if line.helper_tag and not line.comment_only and not line.blank and not line.invalid_tag:
            delete.add(idx)

    if not delete and not cuts:
        return file.text

    out: list[str] = []
    prev_deleted = False
    for idx in range(1, n + 1):
        if idx in delete:
            prev_deleted = True
            continue
        raw = lines[idx - 1]
        if idx in cuts:
            for start, end in sorted(cuts[idx], reverse=True):
                raw = raw[: start - 1] + raw[end:]
            raw = raw.rstrip()
            if not raw.strip():
                prev_deleted = True
                continue
        if prev_deleted and not raw.strip() and out and not out[-1].strip():
            # deletion created a double blank; keep a single one
            continue
        out.append(raw)
        prev_deleted = False
    return "\n".join(out)


# ---------------------------------------------------------------------------
# LLM output post-processing


_FENCE_RE = re.compile(r"```[a-zA-Z]*\s*\n(.*?)```", re.DOTALL)


def extract_code_block(llm_output: str) -> str:
    """Program text between BEGIN DAFNY / END DAFNY, or a fenced block."""
    begin = llm_output.find(BEGIN_TAG)
    if begin != -1:
        start = begin + len(BEGIN_TAG)
        end = llm_output.find(END_TAG, start)
        inner = llm_output[start:end] if end != -1 else llm_output[start:]
        inner = inner.strip("\n")
        inner = re.sub(r"^\s*```[a-zA-Z]*\s*\n", "", inner)
        inner = re.sub(r"\n```\s*$", "", inner)
        if inner.strip():
            return inner
        raise NoCodeBlock("empty program between BEGIN DAFNY and END DAFNY tags")
    m = _FENCE_RE.search(llm_output)
    if m and m.group(1).strip():
        return m.group(1).strip("\n")
    raise NoCodeBlock("no BEGIN DAFNY/END DAFNY block and no fenced code block in response")


def relocate_invariants(text: str) -> str:
    """Move misplaced loop invariants to just after their loop header.

    Handles invariants written after the loop's opening brace (inside the
    body) and trailing invariants after the loop's closing brace. Correctly
    placed clauses are untouched; the function is a no-op without findings.
    """
    for _ in range(64):  # one relocation per pass; files are small
        moved = _relocate_one(text)
        if moved is None:
            return text
        text = moved
    return text


def _relocate_one(text: str) -> str | None:
    from .source_model import _LOOP_RE, _line_depth_events, _scan_lines

    lines = text.split("\n")
    scanned = _scan_lines(text)
    n = len(lines)

    loops: list[dict] = []  # header_ln, open (ln, col) | None, close_ln | None
    depth = 0
    stack: list[dict] = []
    pending: dict | None = None
    for ln in range(1, n + 1):
        code = scanned[ln - 1].code
        if _LOOP_RE.match(code):
            pending = {"header": ln, "open": None, "close": None, "clause_end": ln}
            loops.append(pending)
        elif pending is not None and re.match(r"^\s*(invariant|decreases|modifies)\b", code):
            pending["clause_end"] = ln
        for col, d in _line_depth_events(code):
            depth += d
            if d == 1:
                if pending is not None:
                    pending["open"] = (ln, col)
                    pending["depth"] = depth
                    stack.append(pending)
                    pending = None
                else:
                    stack.append(None)
            else:
                top = stack.pop() if stack else None
                if isinstance(top, dict):
                    top["close"] = ln

    for loop in loops:
        if loop["open"] is None:
            continue
        open_ln, open_col = loop["open"]
        close_ln = loop["close"] or n
        # invariants directly inside this loop's body
        inner_depth = loop.get("depth", 1)
        depth = 0
        candidate_ln = None
        d_running = 0
        # recompute depth to find lines at the loop's body level
        for ln in range(1, close_ln + 1):
            code = scanned[ln - 1].code
            events = _line_depth_events(code)
            line_start_depth = d_running
            for _, d in events:
                d_running += d
            if ln <= open_ln:
                continue
            if ln >= close_ln:
                break
            if line_start_depth == inner_depth and re.match(r"^\s*invariant\b", code):
                if not _owned_by_inner_loop(scanned, loop, ln):
                    candidate_ln = ln
                    break
        if candidate_ln is None and loop["close"] is not None:
            nxt = loop["close"] + 1
            while nxt <= n and scanned[nxt - 1].blank:
                nxt += 1
            if nxt <= n and re.match(r"^\s*invariant\b", scanned[nxt - 1].code):
                candidate_ln = nxt
        if candidate_ln is None:
            continue
        return _move_invariant(lines, scanned, loop, candidate_ln)
    return None


def _owned_by_inner_loop(scanned, loop, ln: int) -> bool:
    from .source_model import _LOOP_RE

    # an invariant line directly below a nested loop header belongs to it
    prev = ln - 1
    while prev > loop["header"]:
        code = scanned[prev - 1].code
        if not code.strip():
            prev -= 1
            continue
        if re.match(r"^\s*(invariant|decreases|modifies)\b", code):
            prev -= 1
            continue
        return bool(_LOOP_RE.match(code))
    return False


def _move_invariant(lines: list[str], scanned, loop: dict, inv_ln: int) -> str:
    header_ln = loop["header"]
    open_ln, open_col = loop["open"]
    header_indent = len(lines[header_ln - 1]) - len(lines[header_ln - 1].lstrip())
    inv_text = " " * (header_indent + 2) + lines[inv_ln - 1].strip()

    out = lines[:]
    del out[inv_ln - 1]

    insert_at = loop["clause_end"]  # after header or after existing clauses
    if open_ln == header_ln:
        # split "while c {" into header, clauses, "{"
        raw = out[header_ln - 1]
        head = raw[: open_col - 1].rstrip()
        tail = raw[open_col - 1 :]
        out[header_ln - 1] = head
        out.insert(header_ln, " " * header_indent + tail)
        insert_at = header_ln
    out.insert(insert_at, inv_text)
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Cheating guardrails


def _oracle_normal_form(clause_text: str) -> str:
    """Comparison form of a test assertion: by-blocks and ';' ignored."""
    norm = _norm(clause_text)
    norm = re.sub(r"\bby\s*\{.*$", "", norm).strip()
    return norm.rstrip(";").strip()


def detect_cheating(
    stripped_original: SourceFile,
    candidate: SourceFile,
    decreases_star_whitelist: tuple[str, ...] = (),
) -> list[Violation]:
    """Guardrail screen: assume, decreases *, lost oracles, altered code."""
    violations: list[Violation] = []

    for clause in candidate.clauses():
        if clause.is_negative_test:
            continue
        if clause.kind == "assume":
            violations.append(
                Violation("assume", _norm(clause.text), clause.span.start_line)
            )
        elif clause.kind == "decreases":
            if re.fullmatch(r"decreases\s*\*\s*;?", _norm(clause.text)):
                if candidate.path not in decreases_star_whitelist:
                    violations.append(
                        Violation("decreases-star", _norm(clause.text), clause.span.start_line)
                    )

    required = Counter(_oracle_normal_form(c.text) for c in test_oracle_asserts(stripped_original))
    available = Counter(
        _oracle_normal_form(c.text)
        for decl in candidate.declarations
        if decl.is_test
        for c in decl.clauses
        if c.kind == "assert" and not c.is_negative_test
    )
    for form, count in required.items():
        missing = count - available.get(form, 0)
        for _ in range(missing):
            violations.append(Violation("removed-test-assertion", form))

    oracle_lines = set()
    for c in test_oracle_asserts(stripped_original):
        oracle_lines.update(c.span.lines())
    delta = align_lines(stripped_original.text, candidate.text)
    for ln, text in delta.unmatched_original:
        if ln in oracle_lines:
            continue  # already reported as a lost assertion
        violations.append(Violation("altered-body", text, ln))

    violations.sort(key=lambda v: (v.line if v.line is not None else 0, v.kind))
    return violations


# ---------------------------------------------------------------------------
# Merge with the manual solution


_HEADER_UNION_KINDS = ("requires", "ensures", "reads", "decreases", "modifies")
_LOOP_UNION_KINDS = ("invariant", "decreases", "modifies")


def _skeleton(file: SourceFile) -> list[str]:
    stripped = strip_annotations(file)
    return [t for t in normalized_lines(stripped) if t]


def _loop_clauses(decl: Declaration) -> dict[str, list[Clause]]:
    loops: dict[str, list[Clause]] = {}
    for clause in decl.clauses:
        if ":loop" in clause.owner:
            loops.setdefault(clause.owner, []).append(clause)
    return loops


def _loop_header_lines(file: SourceFile, decl: Declaration) -> list[int]:
    from .source_model import _LOOP_RE, _scan_lines

    if decl.body_span is None:
        return []
    scanned = _scan_lines(file.text)
    return [
        ln
        for ln in range(decl.body_span.start_line, decl.body_span.end_line + 1)
        if _LOOP_RE.match(scanned[ln - 1].code)
    ]


def merge_with_manual(candidate: SourceFile, manual: SourceFile) -> str:
    """Candidate text with the manual solution's clauses and helpers unioned in.

    Requires both files to share the same executable skeleton; raises
    SkeletonMismatch otherwise (which is itself a cheating signal).
    """
    if _skeleton(candidate) != _skeleton(manual):
        raise SkeletonMismatch("candidate and manual stripped forms differ")

    insertions: list[tuple[int, str]] = []  # (after_line, text)

    for m_decl in manual.declarations:
        if m_decl.name.startswith("<"):
            continue
        c_decl = candidate.find_declaration(m_decl.name)
        if c_decl is None:
            continue

        c_header = [c for c in c_decl.clauses if ":loop" not in c.owner and c.kind in _HEADER_UNION_KINDS]
        have = {_norm(c.text) for c in c_header}
        anchor = max((c.span.end_line for c in c_header), default=c_decl.header_span.end_line)
        indent = " " * (_decl_indent(candidate, c_decl) + 2)
        for m_clause in (
            c for c in m_decl.clauses if ":loop" not in c.owner and c.kind in _HEADER_UNION_KINDS
        ):
            if _norm(m_clause.text) not in have:
                insertions.append((anchor, indent + " ".join(m_clause.text.split())))

        m_loops = _loop_clauses(m_decl)
        c_loops = _loop_clauses(c_decl)
        c_loop_headers = _loop_header_lines(candidate, c_decl)
        m_loop_ids = sorted(m_loops, key=_loop_ordinal)
        c_loop_ids = sorted(c_loops, key=_loop_ordinal)
        for i, m_loop in enumerate(m_loop_ids):
            m_cl = [c for c in m_loops[m_loop] if c.kind in _LOOP_UNION_KINDS]
            if i < len(c_loop_ids):
                c_cl = c_loops[c_loop_ids[i]]
                have_loop = {_norm(c.text) for c in c_cl}
                loop_anchor = max(c.span.end_line for c in c_cl)
                loop_indent = " " * _clause_indent(candidate, c_cl[0])
            elif i < len(c_loop_headers):
                have_loop = set()
                loop_anchor = c_loop_headers[i]
                loop_indent = " " * (_line_indent(candidate, loop_anchor) + 2)
            else:
                continue
            for m_clause in m_cl:
                if _norm(m_clause.text) not in have_loop:
                    insertions.append((loop_anchor, loop_indent + " ".join(m_clause.text.split())))

    out = candidate.lines[:]
    for after_line, text in sorted(insertions, key=lambda x: x[0], reverse=True):
        out.insert(after_line, text)

    candidate_names = {d.name for d in candidate.declarations}
    appended: list[str] = []
    for m_decl in manual.declarations:
        if not _removed_decl(m_decl):
            continue
        if m_decl.name in candidate_names:
            continue
        appended.append("")
        appended.extend(manual.lines[m_decl.span.start_line - 1 : m_decl.span.end_line])

    merged = "\n".join(out)
    if appended:
        merged = merged.rstrip("\n") + "\n" + "\n".join(appended) + "\n"
    return merged


def _loop_ordinal(loop_id: str) -> int:
    m = re.search(r":loop(\d+)$", loop_id)
    return int(m.group(1)) if m else 0


def _decl_indent(file: SourceFile, decl: Declaration) -> int:
    return _line_indent(file, decl.header_span.start_line)


def _clause_indent(file: SourceFile, clause: Clause) -> int:
    return _line_indent(file, clause.span.start_line)


def _line_indent(file: SourceFile, ln: int) -> int:
    raw = file.lines[ln - 1]
    return len(raw) - len(raw.lstrip())


# ---------------------------------------------------------------------------
# Negative tests


def _marker_lines(text: str) -> list[int]:
    lines = text.split("\n")
    out = []
    for idx, raw in enumerate(lines, start=1):
        if _INVALID_RE.search(raw) and _COMMENTED_STMT_RE.match(raw):
            m = _COMMENTED_STMT_RE.match(raw)
            if m and m.group(2).strip() and not m.group(2).lstrip().startswith("//"):
                out.append(idx)
    return out


def count_negative_tests(text: str) -> int:
    return len(_marker_lines(text))


def activate_negative_test(text: str, marker_index: int) -> str:
    """Uncomment the marker_index-th (1-based) negative-test line."""
    markers = _marker_lines(text)
    if marker_index < 1 or marker_index > len(markers):
        raise NoSuchMarker(f"file has {len(markers)} negative-test markers, asked for #{marker_index}")
    lines = text.split("\n")
    target = markers[marker_index - 1]
    m = _COMMENTED_STMT_RE.match(lines[target - 1])
    lines[target - 1] = m.group(1) + m.group(2)
    return "\n".join(lines)
