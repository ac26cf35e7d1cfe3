"""Insertion genomes: the unit of perturbation.

A genome is a fixed-length list of (pos, id) genes. Each non-sentinel gene
inserts one catalog character before code-point index ``pos`` of the
*original* string; ``pos == -1`` is a no-op. Applying a genome never
deletes or reorders original code points, so stripping catalog characters
from the result reproduces the input exactly.

Positions are code-point indices, never byte offsets: genomes must mean
the same thing regardless of how the text is encoded on the wire.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .catalog import InvisibleCatalog
from .errors import EmptyZones, InvalidGene
from .zones import SafetyZones

SENTINEL_POS = -1


@dataclass(frozen=True)
class InsertionGene:
    """One atomic perturbation: insert catalog character ``id`` before
    original code-point index ``pos``; pos -1 means no insertion."""

    pos: int
    id: int

    @property
    def is_sentinel(self) -> bool:
        return self.pos == SENTINEL_POS


@dataclass(frozen=True)
class Genome:
    """A fixed-length tuple of insertion genes; length is the budget M."""

    genes: tuple[InsertionGene, ...]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "Genome":
        return cls(genes=tuple(InsertionGene(pos, cid) for pos, cid in pairs))

    def __len__(self) -> int:
        return len(self.genes)

    def insertion_count(self) -> int:
        return sum(1 for g in self.genes if not g.is_sentinel)

    def validate(self, text_length: int, catalog_size: int) -> None:
        """Raise InvalidGene (with the offending gene index) on any
        out-of-range pos or id."""
        for i, g in enumerate(self.genes):
            if not (SENTINEL_POS <= g.pos <= text_length):
                raise InvalidGene(
                    f"pos {g.pos} outside -1..{text_length}", gene_index=i
                )
            if not (0 <= g.id < catalog_size):
                raise InvalidGene(
                    f"id {g.id} outside 0..{catalog_size - 1}", gene_index=i
                )


def apply_genome(text: str, genome: Genome, catalog: InvisibleCatalog) -> str:
    """Materialize a genome against text.

    Genes with equal pos apply in gene-list order, so the output is fully
    determined by the genome. Original code points keep their relative
    order; only catalog characters are added.
    """
    genome.validate(len(text), len(catalog))
    by_pos: dict[int, list[str]] = {}
    for g in genome.genes:
        if g.is_sentinel:
            continue
        by_pos.setdefault(g.pos, []).append(catalog.char(g.id))
    if not by_pos:
        return text
    out: list[str] = []
    for i, ch in enumerate(text):
        out.extend(by_pos.get(i, ()))
        out.append(ch)
    out.extend(by_pos.get(len(text), ()))
    return "".join(out)


def every_other_position_genome(
    text: str,
    char_id: int,
    zones: SafetyZones | None = None,
    catalog_size: int | None = None,
) -> Genome:
    """Genome that inserts one fixed catalog character at every other
    position (0, 2, 4, ...), optionally restricted to safety zones.

    zones=None means the whole string is fair game (the query side of the
    combined attack). Out-of-zone slots become sentinels so the genome
    length stays at the computed budget. Empty text yields a genome of
    only sentinels.
    """
    if catalog_size is not None and not 0 <= char_id < catalog_size:
        raise InvalidGene(f"id {char_id} outside 0..{catalog_size - 1}", gene_index=0)
    if zones is not None and not zones.spans:
        raise EmptyZones(f"no insertion zones for language {zones.language!r}")
    if not text:
        return Genome(genes=(InsertionGene(SENTINEL_POS, char_id),))
    positions = range(0, len(text) + 1, 2)
    genes = []
    for pos in positions:
        if zones is None or zones.contains(pos):
            genes.append(InsertionGene(pos, char_id))
        else:
            genes.append(InsertionGene(SENTINEL_POS, char_id))
    if zones is not None and all(g.is_sentinel for g in genes):
        raise EmptyZones(
            f"no even position falls inside the {len(zones.spans)} zone span(s)"
        )
    return Genome(genes=tuple(genes))


def sentinelize_out_of_zone(genome: Genome, zones: SafetyZones | None) -> Genome:
    """Replace genes that land outside the zones with sentinels.

    Used by the optimizer: mutated genes drifting out of bounds become
    no-ops instead of hard rejections, which keeps the search space smooth.
    """
    if zones is None:
        return genome
    genes = tuple(
        g if g.is_sentinel or zones.contains(g.pos) else InsertionGene(SENTINEL_POS, g.id)
        for g in genome.genes
    )
    return Genome(genes=genes)


def genome_to_pairs(genome: Genome) -> list[list[int]]:
    """JSON-friendly encoding of a genome."""
    return [[g.pos, g.id] for g in genome.genes]


def genome_from_pairs(pairs: Sequence[Sequence[int]]) -> Genome:
    return Genome.from_pairs((int(p), int(c)) for p, c in pairs)
