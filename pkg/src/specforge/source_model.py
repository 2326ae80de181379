"""Tolerant line-and-bracket segmentation of Dafny source.

This is not a Dafny parser: the verifier is the ground truth for syntax and
semantics. This module only segments text into declarations, specification
clauses, statements and comments -- enough structure for annotation
stripping, line-diff minimization and LOC accounting. It must never fail on
malformed input; unknown regions become ``other`` declarations.

Line conventions: lines and columns are 1-based, span ends are inclusive.
A file's ``lines`` joined with ``"\\n"`` reproduce its ``text``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum


HEADER_CLAUSE_KINDS = ("requires", "ensures", "invariant", "decreases", "modifies", "reads")
STATEMENT_CLAUSE_KINDS = ("assert", "assume", "expect", "calc")

# Clause kinds whose lines count as annotation lines (A). `modifies` and
# `expect` are executable concerns and stay with the conventional program.
ANNOTATION_CLAUSE_KINDS = frozenset(
    {"requires", "ensures", "invariant", "decreases", "reads", "assert", "assume", "calc", "ghost-var"}
)

_DECL_RE = re.compile(
    r"^\s*(?P<mods>(?:(?:ghost|static|twostate|opaque|abstract)\s+)*)"
    r"(?P<kw>method|lemma|function|predicate|datatype|codatatype|newtype|const|class|trait|iterator|module|import|type)\b"
)
_NAME_RE = re.compile(r"[A-Za-z_?'][A-Za-z0-9_?']*")
_CLAUSE_START_RE = re.compile(r"^\s*(requires|ensures|invariant|decreases|modifies|reads)\b")
_STMT_CLAUSE_RE = re.compile(r"^\s*(assert|assume|expect|calc)\b")
_GHOST_VAR_RE = re.compile(r"^\s*ghost\s+var\b")
_LOOP_RE = re.compile(r"^\s*(?:label\s+[A-Za-z_?'][A-Za-z0-9_?']*\s*:\s*)?(while|for)\b")
_HELPER_TAG_RE = re.compile(r"\bhelper\b")
_INVALID_TAG_RE = re.compile(r"//@invalid\b")
_ATTR_RE = re.compile(r"\{:[^{}]*\}")


class DeclKind(str, Enum):
    METHOD = "method"
    LEMMA = "lemma"
    FUNCTION = "function"
    PREDICATE = "predicate"
    GHOST_FUNCTION = "ghost-function"
    GHOST_PREDICATE = "ghost-predicate"
    DATATYPE = "datatype"
    CONST = "const"
    OTHER = "other"


@dataclass(frozen=True)
class Span:
    """1-based, inclusive region of source text."""

    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def covers_line(self, line: int) -> bool:
        return self.start_line <= line <= self.end_line

    def lines(self) -> range:
        return range(self.start_line, self.end_line + 1)


@dataclass(frozen=True)
class Clause:
    kind: str
    span: Span
    owner: str
    text: str
    is_negative_test: bool = False
    is_tagged_helper: bool = False


@dataclass
class Declaration:
    kind: DeclKind
    name: str
    is_ghost: bool
    attributes: list[str]
    header_span: Span
    body_span: Span | None
    clauses: list[Clause]
    is_test: bool

    @property
    def span(self) -> Span:
        if self.body_span is None:
            return self.header_span
        return Span(
            self.header_span.start_line,
            self.header_span.start_col,
            self.body_span.end_line,
            self.body_span.end_col,
        )


@dataclass
class SourceFile:
    path: str
    text: str
    lines: list[str]
    declarations: list[Declaration]
    free_comments: list[Span]
    warnings: list[str] = field(default_factory=list)

    def emit(self) -> str:
        return self.text

    def clauses(self) -> list[Clause]:
        out: list[Clause] = []
        for decl in self.declarations:
            out.extend(decl.clauses)
        return out

    def find_declaration(self, name: str) -> Declaration | None:
        for decl in self.declarations:
            if decl.name == name:
                return decl
        return None


@dataclass(frozen=True)
class LocStats:
    """Line counts: L executable code, A annotation lines, H proof helpers."""

    L: int
    A: int
    H: int

    @property
    def total(self) -> int:
        return self.L + self.A

    def __add__(self, other: "LocStats") -> "LocStats":
        return LocStats(self.L + other.L, self.A + other.A, self.H + other.H)


@dataclass
class _Line:
    """One physical line with comments and string literals masked out.

    ``code`` has the same length as ``raw`` so column positions carry over;
    masked characters become spaces. ``content`` masks comments only (string
    literals preserved) -- the basis for normalized line comparison.
    """

    raw: str
    code: str
    content: str
    comments: list[str]
    attributes: list[str]
    blank: bool
    comment_only: bool
    helper_tag: bool
    invalid_tag: bool

    @property
    def stripped(self) -> str:
        return self.code.strip()


def _mask_line(raw: str, in_block: int) -> tuple[str, str, list[str], int]:
    """Mask comments and string/char literals.

    Returns (code, content, comments, block_depth): ``code`` masks both,
    ``content`` masks only comments.
    """
    out: list[str] = []
    content: list[str] = []
    comments: list[str] = []
    i = 0
    n = len(raw)
    cur_comment: list[str] = []

    def put(code_ch: str, content_ch: str) -> None:
        out.append(code_ch)
        content.append(content_ch)

    while i < n:
        ch = raw[i]
        nxt = raw[i + 1] if i + 1 < n else ""
        if in_block:
            if ch == "/" and nxt == "*":
                in_block += 1
                cur_comment.append("/*")
                put("  ", "  ")
                i += 2
                continue
            if ch == "*" and nxt == "/":
                in_block -= 1
                cur_comment.append("*/")
                put("  ", "  ")
                i += 2
                if in_block == 0 and cur_comment:
                    comments.append("".join(cur_comment))
                    cur_comment = []
                continue
            cur_comment.append(ch)
            put(" ", " ")
            i += 1
            continue
        if ch == "/" and nxt == "/":
            comments.append(raw[i:])
            put(" " * (n - i), " " * (n - i))
            i = n
            continue
        if ch == "/" and nxt == "*":
            in_block = 1
            cur_comment.append("/*")
            put("  ", "  ")
            i += 2
            continue
        if ch == '"':
            put(" ", '"')
            i += 1
            while i < n:
                if raw[i] == "\\" and i + 1 < n:
                    put("  ", raw[i : i + 2])
                    i += 2
                    continue
                if raw[i] == '"':
                    put(" ", '"')
                    i += 1
                    break
                put(" ", raw[i])
                i += 1
            continue
        if ch == "'":
            # char literal; tolerate apostrophes in identifiers (preceded by word char)
            if out and out[-1].strip() and re.match(r"[A-Za-z0-9_?]", out[-1]):
                put(ch, ch)
                i += 1
                continue
            put(" ", "'")
            i += 1
            while i < n:
                if raw[i] == "\\" and i + 1 < n:
                    put("  ", raw[i : i + 2])
                    i += 2
                    continue
                if raw[i] == "'":
                    put(" ", "'")
                    i += 1
                    break
                put(" ", raw[i])
                i += 1
            continue
        put(ch, ch)
        i += 1
    if cur_comment:
        comments.append("".join(cur_comment))
    return "".join(out), "".join(content), comments, in_block


def _scan_lines(text: str) -> list[_Line]:
    raws = text.split("\n")
    result: list[_Line] = []
    block_depth = 0
    for raw in raws:
        was_in_block = block_depth > 0
        code, content, comments, block_depth = _mask_line(raw, block_depth)
        attributes = _ATTR_RE.findall(code)
        code = _ATTR_RE.sub(lambda m: " " * len(m.group(0)), code)
        content = _ATTR_RE.sub(" ", content)
        blank = not raw.strip()
        comment_only = (not blank) and (not code.strip()) and (bool(comments) or was_in_block)
        comment_text = " ".join(comments)
        result.append(
            _Line(
                raw=raw,
                code=code,
                content=content,
                comments=comments,
                attributes=attributes,
                blank=blank,
                comment_only=comment_only,
                helper_tag=bool(_HELPER_TAG_RE.search(comment_text)),
                invalid_tag=bool(_INVALID_TAG_RE.search(raw)),
            )
        )
    return result


def normalized_lines(text: str) -> list[str]:
    """Whitespace-collapsed, comment- and attribute-free view of each line.

    Blank and comment-only lines normalize to "". This is the comparison
    basis for line alignment, cache keys and clause deduplication.
    """
    return [" ".join(ln.content.split()) for ln in _scan_lines(text)]


def _line_depth_events(code: str) -> list[tuple[int, int]]:
    """(col, +1/-1) events for braces on a masked code line; cols 1-based."""
    events = []
    for idx, ch in enumerate(code):
        if ch == "{":
            events.append((idx + 1, 1))
        elif ch == "}":
            events.append((idx + 1, -1))
    return events


_KIND_MAP = {
    "method": DeclKind.METHOD,
    "lemma": DeclKind.LEMMA,
    "colemma": DeclKind.LEMMA,
    "function": DeclKind.FUNCTION,
    "predicate": DeclKind.PREDICATE,
    "datatype": DeclKind.DATATYPE,
    "codatatype": DeclKind.DATATYPE,
    "const": DeclKind.CONST,
}


def parse(text: str, path: str = "<memory>") -> SourceFile:
    """Segment ``text`` into declarations, clauses and comments. Total: never raises."""
    lines = _scan_lines(text)
    try:
        declarations, free_comments, warnings = _parse_lines(lines)
    except Exception as exc:  # tolerance guarantee; should not normally trigger
        declarations = []
        if lines:
            declarations.append(
                Declaration(
                    kind=DeclKind.OTHER,
                    name="<unparsed>",
                    is_ghost=False,
                    attributes=[],
                    header_span=Span(1, 1, 1, max(1, len(lines[0].raw))),
                    body_span=_whole_span(lines, 1, len(lines)),
                    clauses=[],
                    is_test=False,
                )
            )
        free_comments = []
        warnings = [f"segmentation fell back to opaque mode: {exc}"]
    return SourceFile(
        path=path,
        text=text,
        lines=[ln.raw for ln in lines],
        declarations=declarations,
        free_comments=free_comments,
        warnings=warnings,
    )


def _whole_span(lines: list[_Line], start: int, end: int) -> Span:
    end = max(start, min(end, len(lines)))
    return Span(start, 1, end, max(1, len(lines[end - 1].raw)))


def _decl_start(line: _Line) -> re.Match | None:
    if line.blank or line.comment_only:
        return None
    return _DECL_RE.match(line.code)


def _find_body_open(lines: list[_Line], start: int, limit: int) -> tuple[int, int] | None:
    """First body-opening brace in [start, limit], as (line, col).

    Clause lines with brace-balanced expressions (set/map literals) do not
    open a body; any other line containing ``{`` does.
    """
    for ln in range(start, limit + 1):
        line = lines[ln - 1]
        if line.blank or line.comment_only:
            continue
        events = _line_depth_events(line.code)
        if not events:
            continue
        is_clause = bool(_CLAUSE_START_RE.match(line.code))
        net = sum(d for _, d in events)
        if is_clause and net <= 0:
            continue
        for col, d in events:
            if d == 1:
                return ln, col
    return None


def _match_brace(lines: list[_Line], open_line: int, open_col: int) -> tuple[int, int] | None:
    """Position of the ``}`` matching the brace at (open_line, open_col)."""
    depth = 0
    for ln in range(open_line, len(lines) + 1):
        events = _line_depth_events(lines[ln - 1].code)
        for col, d in events:
            if ln == open_line and col < open_col:
                continue
            depth += d
            if depth == 0:
                return ln, col
    return None


def _parse_lines(lines: list[_Line]) -> tuple[list[Declaration], list[Span], list[str]]:
    declarations: list[Declaration] = []
    warnings: list[str] = []
    used = [False] * (len(lines) + 1)  # 1-based line ownership

    i = 1
    n = len(lines)
    while i <= n:
        line = lines[i - 1]
        if line.blank or line.comment_only:
            i += 1
            continue
        m = _decl_start(line)
        if m is None:
            # Unknown top-level region: group until next declaration start.
            start = i
            j = i
            while j <= n and _decl_start(lines[j - 1]) is None:
                j += 1
            end = j - 1
            while end > start and (lines[end - 1].blank or lines[end - 1].comment_only):
                end -= 1
            declarations.append(
                Declaration(
                    kind=DeclKind.OTHER,
                    name=f"<region@{start}>",
                    is_ghost=False,
                    attributes=[],
                    header_span=_whole_span(lines, start, start),
                    body_span=_whole_span(lines, start, end) if end > start else None,
                    clauses=_scan_region_clauses(lines, start, end, owner=f"<region@{start}>"),
                    is_test=False,
                )
            )
            for k in range(start, end + 1):
                used[k] = True
            i = end + 1
            continue

        decl, next_line, warn = _parse_declaration(lines, i, m)
        declarations.append(decl)
        for k in range(decl.span.start_line, decl.span.end_line + 1):
            used[k] = True
        warnings.extend(warn)
        i = max(next_line, i + 1)

    free_comments = []
    for idx, line in enumerate(lines, start=1):
        if line.comment_only and not used[idx]:
            free_comments.append(Span(idx, 1, idx, max(1, len(line.raw))))
    return declarations, free_comments, warnings


def _decl_end_without_body(lines: list[_Line], start: int) -> int:
    """Last line of a braceless declaration (const, datatype, import...)."""
    j = start
    n = len(lines)
    while j <= n:
        line = lines[j - 1]
        if j > start and (_decl_start(line) or line.blank):
            break
        if line.code.rstrip().endswith(";"):
            return j
        j += 1
    end = j - 1
    while end > start and (lines[end - 1].blank or lines[end - 1].comment_only):
        end -= 1
    return max(end, start)


def _parse_declaration(lines: list[_Line], start: int, m: re.Match) -> tuple[Declaration, int, list[str]]:
    warnings: list[str] = []
    line = lines[start - 1]
    mods = m.group("mods") or ""
    kw = m.group("kw")
    is_ghost = "ghost" in mods.split()
    kind = _KIND_MAP.get(kw, DeclKind.OTHER)
    if kind is DeclKind.FUNCTION and is_ghost:
        kind = DeclKind.GHOST_FUNCTION
    elif kind is DeclKind.PREDICATE and is_ghost:
        kind = DeclKind.GHOST_PREDICATE

    rest = line.code[m.end():]
    # legacy "function method" / "predicate method"
    rest = re.sub(r"^\s*method\b", "", rest)
    name_m = _NAME_RE.search(rest)
    name = name_m.group(0) if name_m else f"<anon@{start}>"

    attributes = list(line.attributes)

    n = len(lines)
    # header extends until the body brace or the next declaration start
    limit = start
    j = start + 1
    while j <= n and not _decl_start(lines[j - 1]):
        j += 1
    limit = j - 1

    body_open = _find_body_open(lines, start, limit)
    body_span: Span | None = None
    if body_open is not None:
        o_line, o_col = body_open
        close = _match_brace(lines, o_line, o_col)
        if close is None:
            body_span = Span(o_line, o_col, n, max(1, len(lines[n - 1].raw)))
            warnings.append(f"unbalanced braces in declaration '{name}' at line {o_line}")
            end_line = n
        else:
            body_span = Span(o_line, o_col, close[0], close[1])
            end_line = close[0]
        header_end_line = o_line if o_col > 1 else max(start, o_line - 1)
        header_end_col = o_col - 1 if o_col > 1 else max(1, len(lines[header_end_line - 1].raw))
        # attributes may sit on any header line
        for ln in range(start + 1, min(header_end_line, n) + 1):
            attributes.extend(lines[ln - 1].attributes)
        header_span = Span(start, 1, header_end_line, max(1, header_end_col))
    else:
        end_line = _decl_end_without_body(lines, start)
        header_span = _whole_span(lines, start, end_line)

    is_test = name.startswith("Test") or name == "Main" or any(":test" in a for a in attributes)

    clauses: list[Clause] = []
    clauses.extend(_scan_header_clauses(lines, header_span, body_open, owner=name))
    if body_span is not None and kind in (
        DeclKind.METHOD,
        DeclKind.LEMMA,
        DeclKind.OTHER,
    ):
        clauses.extend(_scan_body_clauses(lines, body_span, owner=name))
    clauses.sort(key=lambda c: (c.span.start_line, c.span.start_col))

    decl = Declaration(
        kind=kind,
        name=name,
        is_ghost=is_ghost,
        attributes=attributes,
        header_span=header_span,
        body_span=body_span,
        clauses=clauses,
        is_test=is_test,
    )
    return decl, end_line + 1, warnings


def _clause_text(lines: list[_Line], span: Span) -> str:
    if span.start_line == span.end_line:
        return lines[span.start_line - 1].raw[span.start_col - 1 : span.end_col]
    parts = [lines[span.start_line - 1].raw[span.start_col - 1 :]]
    for ln in range(span.start_line + 1, span.end_line):
        parts.append(lines[ln - 1].raw)
    parts.append(lines[span.end_line - 1].raw[: span.end_col])
    return "\n".join(parts)


def _mk_clause(lines: list[_Line], kind: str, span: Span, owner: str, negative: bool = False) -> Clause:
    helper = any(lines[ln - 1].helper_tag for ln in span.lines())
    return Clause(
        kind=kind,
        span=span,
        owner=owner,
        text=_clause_text(lines, span),
        is_negative_test=negative,
        is_tagged_helper=helper and not negative,
    )


def _scan_header_clauses(
    lines: list[_Line], header: Span, body_open: tuple[int, int] | None, owner: str
) -> list[Clause]:
    """requires/ensures/... clauses in a declaration header, incl. same-line ones."""
    clauses: list[Clause] = []
    open_starts: list[tuple[int, int, str]] = []  # (line, col, kind)
    for ln in range(header.start_line, header.end_line + 1):
        line = lines[ln - 1]
        if line.blank or line.comment_only:
            continue
        code = line.code
        last_col = header.end_col if ln == header.end_line else len(line.raw)
        for km in re.finditer(r"\b(requires|ensures|invariant|decreases|modifies|reads)\b", code):
            col = km.start() + 1
            if col > last_col:
                continue
            open_starts.append((ln, col, km.group(1)))
    # close each clause at the next clause start / header end
    for idx, (ln, col, kind) in enumerate(open_starts):
        if idx + 1 < len(open_starts):
            nln, ncol, _ = open_starts[idx + 1]
            if nln == ln:
                end = (ln, ncol - 1)
            elif lines[nln - 1].raw[: ncol - 1].strip():
                # next clause starts mid-line: current one reaches up to it
                end = (nln, ncol - 1)
            else:
                end = (nln - 1, max(1, len(lines[nln - 2].raw)))
        else:
            end = (header.end_line, header.end_col)
        end_line, end_col = end
        # trim trailing blank/comment lines from the clause
        while end_line > ln and (lines[end_line - 1].blank or lines[end_line - 1].comment_only):
            end_line -= 1
            end_col = max(1, len(lines[end_line - 1].raw))
        span = Span(ln, col, end_line, max(col if end_line == ln else 1, end_col))
        clauses.append(_mk_clause(lines, kind, span, owner))
    return clauses


def _scan_body_clauses(lines: list[_Line], body: Span, owner: str) -> list[Clause]:
    """Loop clauses, assert/assume/expect/calc statements, ghost vars, negative tests."""
    clauses: list[Clause] = []
    loop_count = 0
    loop_stack: list[tuple[int, str]] = []  # (depth at loop body, loop id)
    depth = 0
    pending_loop: str | None = None

    ln = body.start_line
    while ln <= body.end_line:
        line = lines[ln - 1]
        code = line.code
        if ln == body.start_line:
            code = " " * (body.start_col - 1) + code[body.start_col - 1 :]
        if ln == body.end_line:
            code = code[: body.end_col]

        if line.comment_only or (line.invalid_tag and not code.strip()):
            if line.invalid_tag:
                inner = _commented_statement_kind(line)
                if inner is not None:
                    span = Span(ln, 1, ln, max(1, len(line.raw)))
                    clauses.append(
                        Clause(
                            kind=inner,
                            span=span,
                            owner=owner,
                            text=line.raw,
                            is_negative_test=True,
                            is_tagged_helper=False,
                        )
                    )
            ln += 1
            continue
        if line.blank:
            ln += 1
            continue

        stripped = code.strip()
        loop_m = _LOOP_RE.match(code)
        owner_for_clauses = loop_stack[-1][1] if loop_stack else owner

        if loop_m:
            loop_count += 1
            loop_id = f"{owner}:loop{loop_count}"
            pending_loop = loop_id
            owner_for_clauses = loop_id

        cm = _CLAUSE_START_RE.match(code)
        if cm and not loop_m:
            kind = cm.group(1)
            end_ln = ln
            while end_ln + 1 <= body.end_line:
                nxt = lines[end_ln].code
                nxt_line = lines[end_ln]
                if nxt_line.blank or nxt_line.comment_only:
                    break
                if _CLAUSE_START_RE.match(nxt) or _STMT_CLAUSE_RE.match(nxt) or _LOOP_RE.match(nxt):
                    break
                if nxt.strip().startswith("{") or nxt.strip().startswith("}"):
                    break
                if _GHOST_VAR_RE.match(nxt) or re.match(r"^\s*(var|if|return|break|continue|match|print|forall)\b", nxt):
                    break
                if re.match(r"^\s*[A-Za-z_?'][A-Za-z0-9_?'.]*\s*(:=|\()", nxt):
                    break
                end_ln += 1
            cowner = pending_loop or owner_for_clauses
            if kind in ("invariant", "decreases", "modifies") and cowner == owner and loop_stack:
                cowner = loop_stack[-1][1]
            span = Span(ln, cm.start(1) + 1, end_ln, max(1, len(lines[end_ln - 1].raw)))
            clauses.append(_mk_clause(lines, kind, span, cowner))
            ln = end_ln + 1
            continue

        sm = _STMT_CLAUSE_RE.match(code)
        if sm:
            kind = sm.group(1)
            end_ln = _statement_end(lines, ln, body)
            span = Span(ln, sm.start(1) + 1, end_ln, max(1, len(lines[end_ln - 1].raw)))
            clauses.append(_mk_clause(lines, kind, span, owner))
            # fall through to depth bookkeeping over the whole statement
            for k in range(ln, end_ln + 1):
                for _, d in _line_depth_events(_code_within(lines, k, body)):
                    depth += d
                    if loop_stack and depth < loop_stack[-1][0]:
                        loop_stack.pop()
            ln = end_ln + 1
            continue

        if _GHOST_VAR_RE.match(code):
            span = Span(ln, len(code) - len(code.lstrip()) + 1, ln, max(1, len(line.raw)))
            clauses.append(_mk_clause(lines, "ghost-var", span, owner))

        for _, d in _line_depth_events(code):
            depth += d
            if d == 1 and pending_loop is not None:
                loop_stack.append((depth, pending_loop))
                pending_loop = None
            elif d == -1 and loop_stack and depth < loop_stack[-1][0]:
                loop_stack.pop()
        ln += 1

    return clauses


def _code_within(lines: list[_Line], ln: int, body: Span) -> str:
    code = lines[ln - 1].code
    if ln == body.start_line:
        code = " " * (body.start_col - 1) + code[body.start_col - 1 :]
    if ln == body.end_line:
        code = code[: body.end_col]
    return code


def _statement_end(lines: list[_Line], start: int, body: Span) -> int:
    """Last line of the statement starting at ``start`` (brace-aware)."""
    depth = 0
    opened = False
    ln = start
    while ln <= body.end_line:
        code = _code_within(lines, ln, body)
        for _, d in _line_depth_events(code):
            depth += d
            if d == 1:
                opened = True
        if depth <= 0:
            if not opened:
                return ln
            # block closed on this line; check for else continuation
            nxt = ln + 1
            while nxt <= body.end_line and (lines[nxt - 1].blank or lines[nxt - 1].comment_only):
                nxt += 1
            if nxt <= body.end_line and re.match(r"^\s*else\b", lines[nxt - 1].code):
                opened = False
                ln = nxt
                continue
            if depth == 0 and code.rstrip().endswith("else"):
                ln += 1
                continue
            return ln
        ln += 1
    return body.end_line


def _commented_statement_kind(line: _Line) -> str | None:
    """Kind of the statement hidden in a commented-out negative-test line."""
    text = line.raw
    m = re.match(r"\s*//\s*(.*)$", text)
    if not m:
        return None
    inner = m.group(1)
    sm = re.match(r"\s*(assert|assume|expect|calc)\b", inner)
    if sm:
        return sm.group(1)
    if _INVALID_TAG_RE.search(text):
        return "assert"
    return None


def _scan_region_clauses(lines: list[_Line], start: int, end: int, owner: str) -> list[Clause]:
    span = Span(start, 1, end, max(1, len(lines[end - 1].raw))) if end >= start else None
    if span is None:
        return []
    return _scan_body_clauses(lines, span, owner)


# ---------------------------------------------------------------------------
# LOC accounting


def _annotation_decl(decl: Declaration) -> bool:
    return decl.is_ghost or decl.kind in (
        DeclKind.LEMMA,
        DeclKind.GHOST_FUNCTION,
        DeclKind.GHOST_PREDICATE,
    )


def _line_fully_in_clause(line: _Line, ln: int, clause: Clause) -> bool:
    """Whole-line membership: partial-line clauses leave the line as code."""
    s = clause.span
    if not s.covers_line(ln):
        return False
    raw = line.raw
    if ln == s.start_line and raw[: s.start_col - 1].strip():
        return False
    if ln == s.end_line:
        tail = raw[s.end_col :]
        tail = re.sub(r"//.*$", "", tail)
        if tail.strip():
            return False
    return True


def test_oracle_asserts(file: SourceFile) -> list[Clause]:
    """Assertions in test methods that check outcomes (not tagged helpers)."""
    oracles: list[Clause] = []
    for decl in file.declarations:
        if not decl.is_test:
            continue
        for clause in decl.clauses:
            if clause.kind == "assert" and not clause.is_tagged_helper and not clause.is_negative_test:
                oracles.append(clause)
    return oracles


def count_loc(file: SourceFile) -> LocStats:
    """L/A/H accounting. Blank and comment-only lines count nowhere.

    A: specification clause lines (requires/ensures/invariant/decreases/reads),
    assert/assume/calc statements, ghost and lemma declarations in full, and
    "// helper"-tagged lines. H: the proof-helper subset (non-oracle
    assert/assume/calc lines, lemma lines, ghost-var lines).
    """
    lines = _scan_lines(file.text)
    n = len(lines)
    kind = ["code"] * (n + 1)  # 1-based; code | annotation | helper | skip

    for idx in range(1, n + 1):
        if lines[idx - 1].blank or lines[idx - 1].comment_only:
            kind[idx] = "skip"

    oracle_spans = [c.span for c in test_oracle_asserts(file)]

    for decl in file.declarations:
        decl_is_annotation = _annotation_decl(decl)
        decl_is_lemma = decl.kind is DeclKind.LEMMA
        if decl_is_annotation:
            for ln in decl.span.lines():
                if ln <= n and kind[ln] != "skip":
                    kind[ln] = "helper" if decl_is_lemma else "annotation"
            if decl_is_lemma:
                continue
        for clause in decl.clauses:
            if clause.is_negative_test:
                continue
            if clause.kind not in ANNOTATION_CLAUSE_KINDS:
                continue
            is_oracle = any(clause.span == s for s in oracle_spans)
            for ln in clause.span.lines():
                if ln > n or kind[ln] == "skip":
                    continue
                if not _line_fully_in_clause(lines[ln - 1], ln, clause):
                    continue
                if clause.kind in ("assert", "assume", "calc", "ghost-var") and not is_oracle:
                    kind[ln] = "helper"
                elif kind[ln] == "code":
                    kind[ln] = "annotation"

    for idx in range(1, n + 1):
        if kind[idx] == "code" and lines[idx - 1].helper_tag and not lines[idx - 1].comment_only:
            kind[idx] = "annotation"

    l_count = sum(1 for k in kind[1:] if k == "code")
    a_count = sum(1 for k in kind[1:] if k in ("annotation", "helper"))
    h_count = sum(1 for k in kind[1:] if k == "helper")
    return LocStats(L=l_count, A=a_count, H=h_count)


def negative_test_markers(file: SourceFile) -> list[Clause]:
    """All commented-out negative-test clauses, in document order."""
    markers = [c for c in file.clauses() if c.is_negative_test]
    markers.sort(key=lambda c: c.span.start_line)
    return markers


# ---------------------------------------------------------------------------
# Statement-level segmentation (line granular), used by the minimizer.


@dataclass
class Statement:
    """A body statement as a line range; composite blocks carry children."""

    span: Span
    kind: str  # simple | if | while | for | forall | calc | match | assert-by | block
    depth: int
    children: list["Statement"] = field(default_factory=list)
    else_span: Span | None = None
    else_junction_col: int | None = None  # set when "} else" shares the then-close line
    by_span: Span | None = None
    by_col: int | None = None  # column of the "by" keyword on its line

    def lines(self) -> range:
        return self.span.lines()


_STMT_KIND_RE = re.compile(r"^\s*(if|while|for|forall|calc|match|assert|assume|expect|var|ghost|return|break|continue|print|reveal)\b")


def _stmt_kind(code: str) -> str:
    m = _STMT_KIND_RE.match(code)
    if not m:
        return "simple"
    kw = m.group(1)
    if kw == "assert" and re.search(r"\bby\b", code):
        return "assert-by"
    if kw in ("if", "while", "for", "forall", "calc", "match"):
        return kw
    return "simple"


def _scan_statement_range(lines: list[_Line], start: int, end: int, depth: int) -> list[Statement]:
    """Statements in lines [start, end], line-granular and brace-aware."""
    stmts: list[Statement] = []
    ln = start
    while ln <= end:
        line = lines[ln - 1]
        if line.blank or line.comment_only:
            ln += 1
            continue
        region = Span(start, 1, end, max(1, len(lines[end - 1].raw)))
        stop = _statement_end(lines, ln, region)
        stop = min(stop, end)
        first_code = lines[ln - 1].code
        kind = _stmt_kind(first_code)
        # a loop statement swallows its clause lines even though the header
        # line itself carries no braces
        if kind in ("while", "for"):
            stop = _loop_statement_end(lines, ln, end)
        stmt = Statement(span=_whole_span(lines, ln, stop), kind=kind, depth=depth)
        if stop > ln or "{" in first_code:
            _attach_parts(lines, stmt)
        stmts.append(stmt)
        ln = stop + 1
    return stmts


def _loop_statement_end(lines: list[_Line], start: int, limit: int) -> int:
    ln = start
    seen_open = "{" in lines[start - 1].code
    depth = sum(d for _, d in _line_depth_events(lines[start - 1].code))
    if seen_open and depth <= 0:
        return start
    while ln + 1 <= limit:
        ln += 1
        line = lines[ln - 1]
        if line.blank or line.comment_only:
            continue
        for _, d in _line_depth_events(line.code):
            depth += d
            if d == 1:
                seen_open = True
        if seen_open and depth <= 0:
            return ln
        if not seen_open and not _CLAUSE_START_RE.match(line.code):
            # spec-only loop without a body
            return ln - 1
    return limit


def _brace_regions(lines: list[_Line], span: Span) -> list[tuple[int, int, int, int]]:
    """Top-level brace regions within a statement: (open_ln, open_col, close_ln, close_col)."""
    regions = []
    depth = 0
    open_pos: tuple[int, int] | None = None
    for ln in range(span.start_line, span.end_line + 1):
        for col, d in _line_depth_events(lines[ln - 1].code):
            if d == 1:
                depth += 1
                if depth == 1:
                    open_pos = (ln, col)
            else:
                depth -= 1
                if depth == 0 and open_pos is not None:
                    regions.append((open_pos[0], open_pos[1], ln, col))
                    open_pos = None
    return regions


def _attach_parts(lines: list[_Line], stmt: Statement) -> None:
    regions = _brace_regions(lines, stmt.span)
    for open_ln, open_col, close_ln, close_col in regions:
        if close_ln > open_ln + 1:
            stmt.children.extend(_scan_statement_range(lines, open_ln + 1, close_ln - 1, stmt.depth + 1))
    if stmt.kind == "if":
        _attach_else(lines, stmt, regions)
    if stmt.kind == "assert-by":
        _attach_by(lines, stmt, regions)


def _attach_else(lines: list[_Line], stmt: Statement, regions: list[tuple[int, int, int, int]]) -> None:
    if not regions:
        return
    first_close_ln, first_close_col = regions[0][2], regions[0][3]
    # "} else ..." on the close line itself
    tail = lines[first_close_ln - 1].code[first_close_col:]
    m = re.search(r"\belse\b", tail)
    if m:
        stmt.else_span = _whole_span(lines, first_close_ln, stmt.span.end_line)
        stmt.else_junction_col = first_close_col + m.start() + 1
        return
    nxt = first_close_ln + 1
    while nxt <= stmt.span.end_line and (lines[nxt - 1].blank or lines[nxt - 1].comment_only):
        nxt += 1
    if nxt <= stmt.span.end_line and re.match(r"^\s*else\b", lines[nxt - 1].code):
        stmt.else_span = _whole_span(lines, nxt, stmt.span.end_line)


def _attach_by(lines: list[_Line], stmt: Statement, regions: list[tuple[int, int, int, int]]) -> None:
    for ln in range(stmt.span.start_line, stmt.span.end_line + 1):
        m = re.search(r"\bby\b", lines[ln - 1].code)
        if m:
            stmt.by_span = _whole_span(lines, ln, stmt.span.end_line)
            stmt.by_col = m.start() + 1
            return


def body_statements(file: SourceFile, decl: Declaration) -> list[Statement]:
    """Top-level statements of a method/lemma body (empty for other kinds)."""
    if decl.body_span is None:
        return []
    lines = _scan_lines(file.text)
    body = decl.body_span
    if body.end_line <= body.start_line:
        return []
    start = body.start_line + 1
    end = body.end_line - 1
    if end < start:
        return []
    return _scan_statement_range(lines, start, end, depth=0)
