"""Invisible-character catalog: the ordered set of code points legal for insertion.

The catalog is configuration, not code: it ships as a data file of code
points (one ``U+XXXX`` per line, ``#`` comments allowed) so operators can
swap in their own curated lists. Gene ids index into the catalog, so entry
order must be stable across runs.
"""

from __future__ import annotations

import hashlib
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import RagveilError

_ASCII_PRINTABLE = frozenset(range(0x20, 0x7F))

DEFAULT_CATALOG_RESOURCE = "catalog_default.txt"


@dataclass(frozen=True)
class InvisibleCatalog:
    """Ordered, duplicate-free list of invisible code points.

    entries holds code points as ints; source_tag records where the list
    came from (a file path or a curation label).
    """

    entries: tuple[int, ...]
    source_tag: str = "unspecified"
    _index: dict[int, int] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        seen = set()
        for cp in self.entries:
            if not (0 <= cp <= 0x10FFFF):
                raise RagveilError(f"catalog entry {cp:#x} is not a code point")
            if cp in _ASCII_PRINTABLE:
                raise RagveilError(
                    f"catalog entry U+{cp:04X} is ASCII printable and cannot be invisible"
                )
            if cp in seen:
                raise RagveilError(f"catalog entry U+{cp:04X} is duplicated")
            seen.add(cp)
        object.__setattr__(self, "_index", {cp: i for i, cp in enumerate(self.entries)})

    def __len__(self) -> int:
        return len(self.entries)

    def char(self, char_id: int) -> str:
        """Character for a gene id; raises IndexError when out of range."""
        if not 0 <= char_id < len(self.entries):
            raise IndexError(f"catalog id {char_id} out of range 0..{len(self.entries) - 1}")
        return chr(self.entries[char_id])

    def id_of(self, char: str) -> int:
        """Catalog index of a character; raises KeyError when absent."""
        return self._index[ord(char)]

    def __contains__(self, char: str) -> bool:
        return len(char) == 1 and ord(char) in self._index

    def charset(self) -> frozenset[str]:
        return frozenset(chr(cp) for cp in self.entries)

    def codepoints(self) -> frozenset[int]:
        return frozenset(self.entries)

    def digest(self) -> str:
        """Content digest of the entry list (order-sensitive), for artifact
        provenance. Independent of file comments or formatting."""
        payload = "\n".join(f"U+{cp:04X}" for cp in self.entries).encode("ascii")
        return hashlib.sha256(payload).hexdigest()


def strip_catalog_chars(text: str, catalog: InvisibleCatalog) -> str:
    """Remove every catalog character from text (the visible projection)."""
    members = catalog.codepoints()
    return "".join(ch for ch in text if ord(ch) not in members)


def parse_catalog(lines: list[str], source_tag: str) -> InvisibleCatalog:
    entries = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not line.upper().startswith("U+"):
            raise RagveilError(f"{source_tag}:{lineno}: expected U+XXXX, got {line!r}")
        try:
            cp = int(line[2:], 16)
        except ValueError as exc:
            raise RagveilError(f"{source_tag}:{lineno}: bad hex in {line!r}") from exc
        entries.append(cp)
    return InvisibleCatalog(entries=tuple(entries), source_tag=source_tag)


def load_catalog(path: str | Path) -> InvisibleCatalog:
    """Load a catalog file: one U+XXXX per line, '#' starts a comment."""
    path = Path(path)
    lines = path.read_bytes().decode("utf-8").splitlines()
    return parse_catalog(lines, source_tag=str(path))


def save_catalog(catalog: InvisibleCatalog, path: str | Path) -> None:
    lines = [f"# source: {catalog.source_tag}"]
    lines += [f"U+{cp:04X}  # {unicodedata.name(chr(cp), 'UNNAMED')}" for cp in catalog.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def default_catalog() -> InvisibleCatalog:
    """The bundled catalog: format-category and zero-width characters that
    are layout-neutral (no bidi controls, which visibly reorder text)."""
    ref = resources.files("ragveil.data").joinpath(DEFAULT_CATALOG_RESOURCE)
    lines = ref.read_text(encoding="utf-8").splitlines()
    return parse_catalog(lines, source_tag="bundled:format-and-zero-width")
