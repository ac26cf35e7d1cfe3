"""Invisible insertions 101: catalogs, genomes, and the round trip.

A perturbation is a list of (pos, id) genes: insert catalog character id
before code-point index pos of the original string. Nothing is ever
deleted or reordered, so stripping the catalog characters back out
recovers the original exactly.
"""

from ragveil import apply_genome, default_catalog, strip_catalog_chars
from ragveil.perturb import Genome
from ragveil.textio import escape_text

catalog = default_catalog()
print(f"catalog: {len(catalog)} entries, digest {catalog.digest()[:16]}…")
print(f"first entries: {[f'U+{cp:04X}' for cp in catalog.entries[:6]]}")

text = "def greet(name): return f'hi {name}'"
genome = Genome.from_pairs(
    [
        (4, catalog.id_of("​")),   # zero width space inside 'def greet'
        (20, catalog.id_of("⁠")),  # word joiner mid-string
        (-1, 0),                        # sentinel: no insertion
    ]
)

perturbed = apply_genome(text, genome, catalog)
print("\noriginal :", text)
print("perturbed:", perturbed)           # renders identically in most fonts
print("escaped  :", escape_text(perturbed))  # but the bytes tell the truth
print("lengths  :", len(text), "->", len(perturbed))

restored = strip_catalog_chars(perturbed, catalog)
print("\nstrip(perturbed) == original:", restored == text)
