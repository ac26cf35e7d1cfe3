import ast
import math
from dataclasses import replace

import numpy as np
import pytest

from ragveil.attack import (
    AttackScenario,
    DEConfig,
    FitnessContext,
    attack_both,
    loss_query,
    loss_target,
    optimize,
    select_reference,
)
from ragveil.catalog import strip_catalog_chars
from ragveil.embedding import HashedTrigramEmbedder, cosine
from ragveil.errors import (
    CompilabilityError,
    EmptyCorpus,
    EmptyInput,
    InsensitiveEmbedder,
    RagveilError,
)
from ragveil.perturb import Genome, apply_genome
from ragveil.retrieval import Corpus, Document
from ragveil.zones import PYTHON_LIKE, compute_safety_zones, syntax_oracle


def ctx_target(embedder, query="the query", target="the target"):
    return FitnessContext(
        scenario=AttackScenario.PERTURB_TARGET,
        query=query,
        target=target,
        embedder=embedder,
    )


def test_de_config_validation():
    with pytest.raises(RagveilError):
        DEConfig(population_size=3)
    with pytest.raises(RagveilError):
        DEConfig(differential_weight=0.0)
    with pytest.raises(RagveilError):
        DEConfig(crossover_rate=1.5)
    with pytest.raises(RagveilError):
        DEConfig(budget_fraction=0.0)


def test_loss_target_self_similarity(embedder):
    q = "identical bytes"
    ctx = ctx_target(embedder, query=q)
    assert loss_target(q, q, ctx) == pytest.approx(-1.0, abs=1e-12)


def test_loss_target_orthogonal_texts(embedder):
    # hand-checked disjoint trigram fixtures (see test_embedding)
    ctx = ctx_target(embedder, query="aaaa")
    assert loss_target("aaaa", "bbbb", ctx) == 0.0


def test_loss_target_bounded_for_count_vectors(embedder):
    # counts are non-negative, so similarity is non-negative
    ctx = ctx_target(embedder)
    for t in ("zzz", "the target", "prefix the target suffix"):
        value = loss_target("the query", t, ctx)
        assert -1.0 <= value <= 0.0


def test_loss_query_pulls_and_pushes(embedder):
    ctx = FitnessContext(
        scenario=AttackScenario.PERTURB_QUERY,
        query="whatever",
        target="aaaa",
        reference="bbbb",
        embedder=embedder,
    )
    # perturbed query equal to the target, reference orthogonal
    assert loss_query("aaaa", "aaaa", "bbbb", ctx) == pytest.approx(-1.0, abs=1e-12)
    # perturbed query equal to the reference, target orthogonal
    assert loss_query("bbbb", "aaaa", "bbbb", ctx) == pytest.approx(1.0, abs=1e-12)


def test_loss_query_cancels_when_target_is_reference(embedder):
    ctx = FitnessContext(
        scenario=AttackScenario.PERTURB_QUERY,
        query="q",
        target="same snippet",
        reference="same snippet",
        embedder=embedder,
    )
    for dq in ("alpha", "beta beta", "gamma gamma gamma"):
        assert loss_query(dq, "same snippet", "same snippet", ctx) == pytest.approx(
            0.0, abs=1e-12
        )


def test_context_requires_reference_for_perturb_query(embedder):
    with pytest.raises(RagveilError):
        FitnessContext(
            scenario=AttackScenario.PERTURB_QUERY,
            query="q",
            target="t",
            embedder=embedder,
        )
    FitnessContext(
        scenario=AttackScenario.PERTURB_QUERY,
        query="q",
        target="t",
        embedder=embedder,
        allow_no_reference=True,
    )


def test_select_reference(embedder, fixture_corpus):
    doc = fixture_corpus.documents[4]
    assert select_reference(doc.text, fixture_corpus, embedder).id == doc.id
    single = Corpus([Document(id="solo", text="only doc")])
    assert select_reference("anything", single, embedder).id == "solo"
    override = select_reference("q", fixture_corpus, embedder, override_text="my ref")
    assert override.text == "my ref"
    with pytest.raises(EmptyCorpus):
        select_reference("q", Corpus([]), embedder)


def test_select_reference_matches_oracle(embedder, fixture_corpus, fixture_queries):
    from .oracles import brute_force_ranking

    docs = [(d.id, d.text) for d in fixture_corpus.documents]
    for query in fixture_queries[:4]:
        expected_id = brute_force_ranking(query.text, docs, embedder)[0][0]
        assert select_reference(query.text, fixture_corpus, embedder).id == expected_id


def exhaustive_single_insertion_best(query, subject, embedder, catalog):
    ctx = ctx_target(embedder, query=query, target=subject)
    best = loss_target(query, subject, ctx)  # the no-insertion candidate
    for pos in range(len(subject) + 1):
        for char_id in range(len(catalog)):
            candidate = apply_genome(
                subject, Genome.from_pairs([(pos, char_id)]), catalog
            )
            best = min(best, loss_target(query, candidate, ctx))
    return best


def test_de_matches_exhaustive_at_budget_one(embedder, small_catalog):
    query = "how do I sort a list of tuples"
    subject = "use sorted with a key function"
    expected = exhaustive_single_insertion_best(query, subject, embedder, small_catalog)
    config = DEConfig(
        population_size=32,
        max_generations=50,
        budget_fraction=1.0 / len(subject),
        rng_seed=11,
    )
    outcome = optimize(ctx_target(embedder, query, subject), config, small_catalog)
    assert outcome.best_fitness == pytest.approx(expected, abs=1e-9)


def test_identity_floor_and_monotone_history(embedder, small_catalog):
    query = "find the maximum element"
    subject = "max(values) scans once"
    ctx = ctx_target(embedder, query, subject)
    baseline = loss_target(query, subject, ctx)
    outcome = optimize(
        ctx, DEConfig(max_generations=5, budget_fraction=0.2, rng_seed=3), small_catalog
    )
    assert outcome.best_fitness <= baseline + 1e-12
    diffs = np.diff(outcome.history)
    assert np.all(diffs <= 0)
    assert len(outcome.history) == 6


def test_budget_respected(embedder, small_catalog):
    subject = "twenty characters!!"
    budget_fraction = 0.25
    outcome = optimize(
        ctx_target(embedder, "q query", subject),
        DEConfig(max_generations=3, budget_fraction=budget_fraction, rng_seed=5),
        small_catalog,
    )
    budget = max(1, math.floor(budget_fraction * len(subject)))
    assert outcome.best_genome.insertion_count() <= budget
    assert len(outcome.best_genome) == budget


def test_evaluation_budget(embedder, small_catalog):
    outcome = optimize(
        ctx_target(embedder, "some query", "some subject text"),
        DEConfig(population_size=32, max_generations=3, budget_fraction=0.1, rng_seed=1),
        small_catalog,
    )
    assert outcome.evaluations <= 32 + 32 * 3


def test_seeded_determinism(embedder, small_catalog):
    config = DEConfig(max_generations=4, budget_fraction=0.2, rng_seed=99)
    runs = [
        optimize(ctx_target(embedder, "query text", "subject text here"), config, small_catalog)
        for _ in range(2)
    ]
    assert runs[0].best_fitness == runs[1].best_fitness
    assert runs[0].history == runs[1].history
    assert runs[0].best_genome == runs[1].best_genome
    assert runs[0].perturbed_text == runs[1].perturbed_text


def test_perturbed_text_is_apply_of_best_genome(embedder, small_catalog, catalog):
    outcome = optimize(
        ctx_target(embedder, "a query", "subject string"),
        DEConfig(max_generations=3, budget_fraction=0.3, rng_seed=2),
        small_catalog,
    )
    assert outcome.perturbed_text == apply_genome(
        "subject string", outcome.best_genome, small_catalog
    )
    assert strip_catalog_chars(outcome.perturbed_text, small_catalog) == "subject string"


def test_scale_invariance_of_argmin(small_catalog):
    # scaling every embedding by a positive constant must not move the
    # optimum of the loss; check on the enumerable single-insertion problem
    class Scaled(HashedTrigramEmbedder):
        def embed(self, text):
            return 7.5 * super().embed(text)

    query, subject = "query q", "the subject text"

    def exhaustive_argmin(embedder):
        ctx = ctx_target(embedder, query, subject)
        candidates = [Genome.from_pairs([(-1, 0)])] + [
            Genome.from_pairs([(pos, char_id)])
            for pos in range(len(subject) + 1)
            for char_id in range(len(small_catalog))
        ]
        losses = [
            loss_target(query, apply_genome(subject, g, small_catalog), ctx)
            for g in candidates
        ]
        return candidates[losses.index(min(losses))], min(losses)

    plain_best, plain_loss = exhaustive_argmin(HashedTrigramEmbedder())
    scaled_best, scaled_loss = exhaustive_argmin(Scaled())
    assert scaled_best == plain_best
    assert scaled_loss == pytest.approx(plain_loss, abs=1e-9)


def test_insensitive_embedder_refused(embedder, small_catalog, catalog):
    embedder.sensitivity_checked = False
    with pytest.raises(InsensitiveEmbedder):
        optimize(
            ctx_target(embedder), DEConfig(budget_fraction=0.5, rng_seed=0), small_catalog
        )
    # forcing overrides the refusal
    outcome = optimize(
        ctx_target(embedder),
        DEConfig(max_generations=1, budget_fraction=0.5, rng_seed=0),
        small_catalog,
        force=True,
    )
    assert outcome.best_fitness <= 0


def test_empty_subject_rejected(embedder, small_catalog):
    with pytest.raises(EmptyInput):
        optimize(
            ctx_target(embedder, "q", ""),
            DEConfig(budget_fraction=0.5, rng_seed=0),
            small_catalog,
        )


def test_perturb_both_needs_closed_form(embedder, small_catalog):
    ctx = FitnessContext(
        scenario=AttackScenario.PERTURB_BOTH,
        query="q",
        target="t",
        embedder=embedder,
    )
    with pytest.raises(RagveilError):
        optimize(ctx, DEConfig(budget_fraction=0.5, rng_seed=0), small_catalog)


def test_zone_restricted_optimization_keeps_code_valid(embedder, small_catalog, targets):
    code, language = targets["target_c1"]
    zones = compute_safety_zones(code, language)
    ctx = ctx_target(embedder, "run a shell command from user input", code)
    outcome = optimize(
        ctx,
        DEConfig(max_generations=3, budget_fraction=0.1, rng_seed=8),
        small_catalog,
        zones=zones,
        oracle_language=language,
    )
    assert syntax_oracle(outcome.perturbed_text, language).passed
    for gene in outcome.best_genome.genes:
        if not gene.is_sentinel:
            assert zones.contains(gene.pos)


def test_attack_both_strip_round_trip(embedder, catalog, targets):
    code, language = targets["target_c3"]
    char_id = catalog.id_of("​")
    dq, dt = attack_both(
        "find user by name", code, catalog, char_id, target_language=language
    )
    assert strip_catalog_chars(dq, catalog) == "find user by name"
    assert strip_catalog_chars(dt, catalog) == code
    ast.parse(dt)


def test_attack_both_raises_similarity(embedder, catalog, fixture_queries, targets):
    # shared invisible trigram mass dominates both profiles
    char_id = catalog.id_of("​")
    for tag in ("target_a", "target_c1", "target_c3"):
        code, language = targets[tag]
        for query in fixture_queries[:4]:
            dq, dt = attack_both(query.text, code, catalog, char_id, target_language=language)
            before = cosine(embedder.embed(query.text), embedder.embed(code))
            after = cosine(embedder.embed(dq), embedder.embed(dt))
            assert after > before


def test_attack_both_all_python_targets_parse(catalog, targets):
    char_id = catalog.id_of("⁠")
    for tag in ("target_a", "target_c1", "target_c2", "target_c3", "target_c4"):
        code, language = targets[tag]
        _, dt = attack_both("some query", code, catalog, char_id, target_language=language)
        assert syntax_oracle(dt, language).passed, tag


def test_attack_both_explicit_zones_failure(catalog, targets):
    code, language = targets["target_c1"]
    # identifier-only zones cannot survive the host parser
    zones = compute_safety_zones(code, language, kinds=("identifier",))
    with pytest.raises(CompilabilityError):
        attack_both("q", code, catalog, 0, target_zones=zones, target_language=language)


def test_attack_both_needs_zone_source(catalog):
    with pytest.raises(RagveilError):
        attack_both("q", "t = 1", catalog, 0)
