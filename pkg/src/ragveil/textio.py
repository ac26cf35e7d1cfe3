"""Byte-faithful text I/O and printable escaping.

Perturbed text must survive every hop unchanged, so files are read as
bytes and decoded strictly (text mode would at minimum translate
newlines). Going the other way, perturbed text is never written raw into
logs or artifacts: it is escaped to pure ASCII so the toolkit's own
outputs cannot act as imperceptible payload carriers.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Iterator


def read_text_exact(path: str | Path) -> str:
    """UTF-8 decode with no newline translation and no normalization."""
    return Path(path).read_bytes().decode("utf-8")


def write_text_exact(path: str | Path, text: str) -> None:
    Path(path).write_bytes(text.encode("utf-8"))


def escape_text(text: str) -> str:
    """Reversible ASCII-only form: non-ASCII and controls become \\uXXXX
    style escapes, backslashes are doubled."""
    return text.encode("unicode_escape").decode("ascii")


def unescape_text(escaped: str) -> str:
    return escaped.encode("ascii").decode("unicode_escape")


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    """One compact, key-sorted JSON object per line; ASCII-only output."""
    lines = [
        json.dumps(rec, ensure_ascii=True, sort_keys=True, separators=(",", ":"))
        for rec in records
    ]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii") if lines else b"")


def read_jsonl(path: str | Path) -> Iterator[dict]:
    for lineno, line in enumerate(read_text_exact(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: bad JSON record: {exc}") from exc
