"""Code-safety zoning: where can a character be inserted without breaking
the host language?

A lightweight lexer finds comment spans, string-literal interiors, and
user-defined identifier interiors. Spans are expressed in insertion-
position space: span (s, e) allows inserting before any code-point index
p with s <= p < e. For plain text the whole string is one zone.

The zoning is intentionally approximate; a syntax oracle (in-process
``ast.parse`` for python-like, a configurable external command otherwise)
is the final word on whether a perturbed snippet still parses.
"""

from __future__ import annotations

import ast
import itertools
import keyword
import subprocess
from dataclasses import dataclass
from typing import Sequence

from .errors import OracleUnavailable, RagveilError, ZoneError

PYTHON_LIKE = "python-like"
JAVA_LIKE = "java-like"
PLAIN_TEXT = "plain-text"

SUPPORTED_LANGUAGES = (PYTHON_LIKE, JAVA_LIKE, PLAIN_TEXT)

ZONE_KINDS = ("comment", "string", "identifier", "text")

_JAVA_KEYWORDS = frozenset(
    """abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public return short static strictfp super switch synchronized
    this throw throws transient try var void volatile while record sealed
    permits yield null true false""".split()
)

_PY_KEYWORDS = frozenset(keyword.kwlist)

_PY_STRING_PREFIXES = frozenset(
    "".join(cased)
    for base in ("r", "b", "u", "f", "rb", "br", "fr", "rf")
    for cased in itertools.product(*((c, c.upper()) for c in base))
)


@dataclass(frozen=True)
class Span:
    """Half-open range of legal insertion positions, tagged by what kind of
    lexical region produced it."""

    start: int
    end: int
    kind: str

    def __contains__(self, pos: int) -> bool:
        return self.start <= pos < self.end


@dataclass(frozen=True)
class SafetyZones:
    """Disjoint, sorted insertion-position spans for one piece of code."""

    spans: tuple[Span, ...]
    language: str

    def __post_init__(self):
        prev_end = -1
        for s in self.spans:
            if s.kind not in ZONE_KINDS:
                raise RagveilError(f"unknown zone kind {s.kind!r}")
            if s.start >= s.end:
                raise RagveilError(f"empty or inverted span {s}")
            if s.start < prev_end:
                raise RagveilError(f"span {s} overlaps its predecessor")
            prev_end = s.end

    def contains(self, pos: int) -> bool:
        return any(pos in s for s in self.spans)

    def restrict(self, kinds: Sequence[str]) -> "SafetyZones":
        wanted = set(kinds)
        return SafetyZones(
            spans=tuple(s for s in self.spans if s.kind in wanted),
            language=self.language,
        )

    def positions(self) -> list[int]:
        out: list[int] = []
        for s in self.spans:
            out.extend(range(s.start, s.end))
        return out


def _is_ident_start(ch: str) -> bool:
    return ch.isascii() and (ch.isalpha() or ch == "_")


def _is_ident_part(ch: str) -> bool:
    return ch.isascii() and (ch.isalnum() or ch == "_")


def _identifier_span(word: str, start: int, keywords: frozenset[str]) -> Span | None:
    # Interiors only: a length-1 identifier has nowhere to insert.
    if word in keywords or len(word) < 2:
        return None
    return Span(start + 1, start + len(word), "identifier")


def _scan_python_like(code: str, strict: bool) -> list[Span]:
    spans: list[Span] = []
    n = len(code)
    i = 0
    while i < n:
        ch = code[i]
        if ch == "#":
            j = i + 1
            while j < n and code[j] != "\n":
                j += 1
            spans.append(Span(i + 1, j + 1, "comment"))
            i = j
        elif ch in "'\"":
            quote = ch * 3 if code[i : i + 3] == ch * 3 else ch
            qlen = len(quote)
            j = i + qlen
            closed = False
            while j < n:
                if code[j] == "\\":
                    j += 2
                    continue
                if code.startswith(quote, j):
                    closed = True
                    break
                if qlen == 1 and code[j] == "\n":
                    break
                j += 1
            if not closed:
                if strict:
                    raise ZoneError(f"unterminated string starting at index {i}")
                i = n
                continue
            if j > i + qlen:
                spans.append(Span(i + qlen, j + 1, "string"))
            i = j + qlen - 1
        elif _is_ident_start(ch):
            j = i + 1
            while j < n and _is_ident_part(code[j]):
                j += 1
            word = code[i:j]
            # A prefix letter glued to a quote is part of the string token.
            if j < n and code[j] in "'\"" and word in _PY_STRING_PREFIXES:
                i = j - 1
            else:
                span = _identifier_span(word, i, _PY_KEYWORDS)
                if span:
                    spans.append(span)
                i = j - 1
        i += 1
    return spans


def _scan_java_like(code: str, strict: bool) -> list[Span]:
    spans: list[Span] = []
    n = len(code)
    i = 0
    while i < n:
        ch = code[i]
        if ch == "/" and code[i + 1 : i + 2] == "/":
            j = i + 2
            while j < n and code[j] != "\n":
                j += 1
            if j > i + 2:
                spans.append(Span(i + 2, j + 1, "comment"))
            i = j
        elif ch == "/" and code[i + 1 : i + 2] == "*":
            j = code.find("*/", i + 2)
            if j == -1:
                if strict:
                    raise ZoneError(f"unterminated block comment at index {i}")
                i = n
                continue
            if j > i + 2:
                spans.append(Span(i + 2, j + 1, "comment"))
            i = j + 1
        elif ch == '"':
            j = i + 1
            closed = False
            while j < n:
                if code[j] == "\\":
                    j += 2
                    continue
                if code[j] == '"':
                    closed = True
                    break
                if code[j] == "\n":
                    break
                j += 1
            if not closed:
                if strict:
                    raise ZoneError(f"unterminated string starting at index {i}")
                i = n
                continue
            if j > i + 1:
                spans.append(Span(i + 1, j + 1, "string"))
            i = j
        elif ch == "'":
            # Char literals hold exactly one char; no room to insert.
            j = i + 1
            while j < n and code[j] != "'":
                j += 2 if code[j] == "\\" else 1
            i = j if j < n else n - 1
        elif _is_ident_start(ch):
            j = i + 1
            while j < n and _is_ident_part(code[j]):
                j += 1
            span = _identifier_span(code[i:j], i, _JAVA_KEYWORDS)
            if span:
                spans.append(span)
            i = j - 1
        i += 1
    return spans


def compute_safety_zones(
    code: str,
    language: str,
    kinds: Sequence[str] = ("comment", "string", "identifier"),
    strict: bool = True,
) -> SafetyZones:
    """Find the spans of code where insertion keeps the snippet valid.

    strict=False tolerates lexer trouble (unterminated literals) by
    skipping the broken region; callers that prefer failing get ZoneError
    and may fall back to kinds=("comment",).
    """
    if language == PLAIN_TEXT:
        spans = (Span(0, len(code) + 1, "text"),) if code else ()
        return SafetyZones(spans=spans, language=language)
    if language == PYTHON_LIKE:
        raw = _scan_python_like(code, strict=strict)
    elif language == JAVA_LIKE:
        raw = _scan_java_like(code, strict=strict)
    else:
        raise RagveilError(f"unsupported language {language!r}")
    wanted = set(kinds)
    picked = sorted((s for s in raw if s.kind in wanted), key=lambda s: (s.start, s.end))
    return SafetyZones(spans=tuple(picked), language=language)


def language_for_extension(ext: str) -> str:
    ext = ext.lower().lstrip(".")
    if ext in ("py", "pyw"):
        return PYTHON_LIKE
    if ext in ("java",):
        return JAVA_LIKE
    return PLAIN_TEXT


@dataclass(frozen=True)
class OracleReport:
    passed: bool
    reason: str | None = None


def syntax_oracle(
    code: str,
    language: str,
    command: Sequence[str] | None = None,
    timeout: float = 30.0,
) -> OracleReport:
    """Does the code still parse?

    python-like uses the in-process parser. Other languages need an
    external command that reads the code on stdin and exits 0 on success;
    without one the oracle is unavailable rather than silently lenient.
    """
    if command is not None:
        try:
            proc = subprocess.run(
                list(command),
                input=code.encode("utf-8"),
                capture_output=True,
                timeout=timeout,
            )
        except FileNotFoundError as exc:
            raise OracleUnavailable(f"oracle command not found: {exc}") from exc
        except subprocess.TimeoutExpired as exc:
            raise OracleUnavailable(f"oracle timed out after {timeout}s") from exc
        if proc.returncode == 0:
            return OracleReport(passed=True)
        detail = proc.stderr.decode("utf-8", "replace").strip()[:200]
        return OracleReport(passed=False, reason=detail or f"exit {proc.returncode}")
    if language == PYTHON_LIKE:
        try:
            ast.parse(code)
        except (SyntaxError, ValueError) as exc:
            return OracleReport(passed=False, reason=str(exc))
        return OracleReport(passed=True)
    if language == PLAIN_TEXT:
        return OracleReport(passed=True)
    raise OracleUnavailable(f"no syntax checker configured for {language!r}")
