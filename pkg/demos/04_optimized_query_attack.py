"""Differential evolution over insertion genomes: the perturb-query attack.

The loss pulls the perturbed query toward the adversarial target and
pushes it away from the reference (the snippet the query would normally
retrieve). Watch the best loss fall generation by generation; the
all-sentinel seed guarantees it never ends worse than the baseline.
"""

from ragveil import (
    AttackScenario,
    Corpus,
    DEConfig,
    Document,
    FitnessContext,
    HashedTrigramEmbedder,
    cosine,
    default_catalog,
    optimize,
    poison,
    rank_of,
    select_reference,
)
from ragveil.textio import escape_text

embedder = HashedTrigramEmbedder()
catalog = default_catalog()

corpus = Corpus(
    [
        Document(
            id="compare_digest",
            text="def check_password(supplied, stored):\n    return hmac.compare_digest(supplied, stored)\n",
            label="safe",
        ),
        Document(id="scrypt_hash", text="hashlib.scrypt(pw, salt=salt, n=2**14, r=8, p=1)", label="safe"),
        Document(id="read_csv", text="list(csv.reader(open(path)))", label="safe"),
        Document(id="sort_by_key", text="sorted(rows, key=lambda r: r[1])", label="safe"),
    ]
)
target = Document(
    id="adv_password_check",
    text="if supplied == expected:\n    grant_access()\n",
    label="adversarial",
)
query = "how do I check a password securely"

reference = select_reference(query, corpus, embedder)
print("reference (clean nearest neighbor):", reference.id)

ctx = FitnessContext(
    scenario=AttackScenario.PERTURB_QUERY,
    query=query,
    target=target.text,
    reference=reference.text,
    embedder=embedder,
)
config = DEConfig(population_size=32, max_generations=12, budget_fraction=0.3, rng_seed=7)
outcome = optimize(ctx, config, catalog)

print("\nloss per generation:")
for gen, loss in enumerate(outcome.history):
    print(f"  gen {gen:2d}: {loss:+.4f}")
print("candidate evaluations:", outcome.evaluations)
print("insertions used:", outcome.best_genome.insertion_count(),
      "of budget", len(outcome.best_genome))
print("perturbed query (escaped):", escape_text(outcome.perturbed_text))

poisoned = poison(corpus, target)
print("\ntarget rank, clean query    :", rank_of(query, poisoned, target.id, embedder))
print("target rank, perturbed query:",
      rank_of(outcome.perturbed_text, poisoned, target.id, embedder))
print("sim(query, target) before:", f"{cosine(embedder.embed(query), embedder.embed(target.text)):.4f}")
print("sim(query, target) after :",
      f"{cosine(embedder.embed(outcome.perturbed_text), embedder.embed(target.text)):.4f}")
