"""Black-box attack optimization over insertion genomes.

Two of the three attacker scenarios need optimization: perturbing the
query and perturbing the target both run differential evolution
(DE/rand/1/bin) over integer-encoded genomes. The third, perturbing both
sides, needs none: saturating query and target with the same invisible
character makes their embeddings collide by construction.

The optimizer never degrades below the unperturbed baseline: one
individual is seeded as the all-sentinel identity and selection is greedy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .catalog import InvisibleCatalog
from .embedding import cosine
from .errors import (
    CompilabilityError,
    EmptyCorpus,
    EmptyInput,
    EmptyZones,
    InsensitiveEmbedder,
    OracleUnavailable,
    RagveilError,
    ZoneError,
)
from .perturb import (
    SENTINEL_POS,
    Genome,
    InsertionGene,
    apply_genome,
    every_other_position_genome,
    sentinelize_out_of_zone,
)
from .retrieval import Corpus, Document, full_ranking
from .zones import SafetyZones, compute_safety_zones, syntax_oracle

logger = logging.getLogger(__name__)


class AttackScenario(str, Enum):
    PERTURB_QUERY = "perturb_query"
    PERTURB_TARGET = "perturb_target"
    PERTURB_BOTH = "perturb_both"


@dataclass(frozen=True)
class DEConfig:
    """Differential evolution knobs.

    population_size=32 / max_generations=3 match the evaluation protocol;
    F and CR are conventional defaults since the protocol leaves them
    open. budget_fraction sets the insertion budget as a fraction of the
    subject's code-point length: M = max(1, floor(b * len)).
    """

    population_size: int = 32
    max_generations: int = 3
    differential_weight: float = 0.8
    crossover_rate: float = 0.7
    budget_fraction: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 4:
            raise RagveilError("population_size must be >= 4 (rand/1 needs 3 partners)")
        if not 0 < self.differential_weight <= 2:
            raise RagveilError("differential_weight must be in (0, 2]")
        if not 0 <= self.crossover_rate <= 1:
            raise RagveilError("crossover_rate must be in [0, 1]")
        if not 0 < self.budget_fraction <= 1:
            raise RagveilError("budget_fraction must be in (0, 1]")
        if self.max_generations < 0:
            raise RagveilError("max_generations must be >= 0")


@dataclass
class FitnessContext:
    """Everything a loss evaluation needs.

    reference is required for the perturb-query loss unless explicitly
    disabled (reference=None with allow_no_reference=True).
    """

    scenario: AttackScenario
    query: str
    target: str
    embedder: object
    reference: str | None = None
    similarity: Callable[[np.ndarray, np.ndarray], float] = field(default=cosine)
    allow_no_reference: bool = False

    def __post_init__(self):
        self.scenario = AttackScenario(self.scenario)
        if (
            self.scenario is AttackScenario.PERTURB_QUERY
            and self.reference is None
            and not self.allow_no_reference
        ):
            raise RagveilError(
                "perturb_query needs a reference document (or set allow_no_reference)"
            )


@dataclass(frozen=True)
class AttackOutcome:
    """Result of one optimization run.

    history holds the best fitness after initialization and after each
    generation; greedy selection makes it non-increasing. evaluations
    counts candidate fitness evaluations (syntax-rejected candidates are
    scored +inf without an embedding call).
    """

    best_genome: Genome
    best_fitness: float
    perturbed_text: str
    history: tuple[float, ...]
    evaluations: int


def loss_target(query: str, perturbed_target: str, ctx: FitnessContext) -> float:
    """Negative similarity between the clean query and the perturbed
    target; lower is better."""
    e = ctx.embedder
    return -ctx.similarity(e.embed(query), e.embed(perturbed_target))


def loss_query(
    perturbed_query: str, target: str, reference: str | None, ctx: FitnessContext
) -> float:
    """Pull toward the target and away from the reference: the perturbed
    query should leave its benign neighborhood. Lower is better."""
    e = ctx.embedder
    qv = e.embed(perturbed_query)
    loss = -ctx.similarity(qv, e.embed(target))
    if reference is not None:
        loss += ctx.similarity(qv, e.embed(reference))
    return loss


def select_reference(
    query: str,
    corpus: Corpus,
    embedder,
    override_text: str | None = None,
) -> Document:
    """The corpus document closest to the query in embedding space, or a
    caller-constructed plausible reference when the corpus is unknown."""
    if override_text is not None:
        return Document(id="reference:user-supplied", text=override_text)
    if len(corpus) == 0:
        raise EmptyCorpus("cannot select a reference from an empty corpus")
    best_id, _ = full_ranking(query, corpus, embedder)[0]
    return corpus.get(best_id)


def _clamp_round(values: np.ndarray, low: int, high: int) -> np.ndarray:
    return np.clip(np.rint(values), low, high).astype(np.int64)


def _genome_from_row(row: np.ndarray) -> Genome:
    return Genome(
        genes=tuple(InsertionGene(int(p), int(c)) for p, c in row)
    )


class _FitnessEvaluator:
    """Materializes candidate rows into texts and batch-scores them."""

    def __init__(
        self,
        ctx: FitnessContext,
        catalog: InvisibleCatalog,
        subject: str,
        zones: SafetyZones | None,
        oracle_language: str | None,
        oracle_command: Sequence[str] | None,
    ):
        self.ctx = ctx
        self.catalog = catalog
        self.subject = subject
        self.zones = zones
        self.oracle_language = oracle_language
        self.oracle_command = oracle_command
        self.oracle_warned = False
        self.evaluations = 0
        e = ctx.embedder
        if ctx.scenario is AttackScenario.PERTURB_TARGET:
            self.fixed_query = e.embed(ctx.query)
            self.fixed_target = None
            self.fixed_reference = None
        else:
            self.fixed_query = None
            self.fixed_target = e.embed(ctx.target)
            self.fixed_reference = (
                e.embed(ctx.reference) if ctx.reference is not None else None
            )

    def candidate_text(self, row: np.ndarray) -> tuple[Genome, str]:
        genome = sentinelize_out_of_zone(_genome_from_row(row), self.zones)
        return genome, apply_genome(self.subject, genome, self.catalog)

    def _syntax_ok(self, text: str) -> bool:
        if (
            self.ctx.scenario is not AttackScenario.PERTURB_TARGET
            or self.oracle_language is None
        ):
            return True
        try:
            return syntax_oracle(text, self.oracle_language, self.oracle_command).passed
        except OracleUnavailable as exc:
            if not self.oracle_warned:
                logger.warning("syntax oracle unavailable, proceeding unchecked: %s", exc)
                self.oracle_warned = True
            return True

    def score_rows(self, rows: np.ndarray) -> tuple[np.ndarray, list[Genome], list[str]]:
        genomes: list[Genome] = []
        texts: list[str] = []
        valid: list[int] = []
        losses = np.full(len(rows), math.inf)
        for i, row in enumerate(rows):
            genome, text = self.candidate_text(row)
            genomes.append(genome)
            texts.append(text)
            if self._syntax_ok(text):
                valid.append(i)
        self.evaluations += len(rows)
        if valid:
            vectors = self.ctx.embedder.embed_batch([texts[i] for i in valid])
            for i, vec in zip(valid, vectors):
                losses[i] = self._loss_from_vector(vec)
        return losses, genomes, texts

    def _loss_from_vector(self, vec: np.ndarray) -> float:
        sim = self.ctx.similarity
        if self.ctx.scenario is AttackScenario.PERTURB_TARGET:
            return -sim(self.fixed_query, vec)
        loss = -sim(vec, self.fixed_target)
        if self.fixed_reference is not None:
            loss += sim(vec, self.fixed_reference)
        return loss


def optimize(
    ctx: FitnessContext,
    config: DEConfig,
    catalog: InvisibleCatalog,
    zones: SafetyZones | None = None,
    oracle_language: str | None = None,
    oracle_command: Sequence[str] | None = None,
    force: bool = False,
) -> AttackOutcome:
    """DE/rand/1/bin over integer genomes.

    Mutation adds the scaled difference of two random individuals to a
    third, independently per pos and id coordinate, then rounds and clamps
    back into range; binomial crossover guarantees at least one mutant
    coordinate; greedy selection keeps the lower-loss candidate. Genes that
    drift outside the safety zones apply as sentinels, and perturbed-target
    candidates that stop parsing score +inf.
    """
    if ctx.embedder.sensitivity_checked is False and not force:
        raise InsensitiveEmbedder(
            "embedder ignores invisible insertions; pass force=True to attack anyway"
        )
    if len(catalog) == 0:
        raise RagveilError("catalog is empty")
    subject = (
        ctx.query if ctx.scenario is AttackScenario.PERTURB_QUERY else ctx.target
    )
    if ctx.scenario is AttackScenario.PERTURB_BOTH:
        raise RagveilError("perturb_both is closed-form; use attack_both()")
    if not subject:
        raise EmptyInput("cannot optimize a zero-length subject")

    length = len(subject)
    budget = max(1, math.floor(config.budget_fraction * length))
    pop_size = config.population_size
    n_catalog = len(catalog)
    rng = np.random.default_rng(config.rng_seed)

    evaluator = _FitnessEvaluator(
        ctx, catalog, subject, zones, oracle_language, oracle_command
    )

    pop = np.empty((pop_size, budget, 2), dtype=np.int64)
    pop[:, :, 0] = rng.integers(SENTINEL_POS, length + 1, size=(pop_size, budget))
    pop[:, :, 1] = rng.integers(0, n_catalog, size=(pop_size, budget))
    pop[0, :, 0] = SENTINEL_POS  # identity seed: the attack never loses ground
    pop[0, :, 1] = 0

    losses, genomes, texts = evaluator.score_rows(pop)
    best_idx = int(np.argmin(losses))
    best = (losses[best_idx], genomes[best_idx], texts[best_idx])
    history = [float(best[0])]

    f_weight = config.differential_weight
    for _ in range(config.max_generations):
        partners = np.empty((pop_size, 3), dtype=np.int64)
        for i in range(pop_size):
            pool = np.delete(np.arange(pop_size), i)
            partners[i] = rng.choice(pool, size=3, replace=False)
        r1, r2, r3 = pop[partners[:, 0]], pop[partners[:, 1]], pop[partners[:, 2]]
        mutant = r1.astype(np.float64) + f_weight * (r2 - r3)
        mutant_int = np.empty_like(pop)
        mutant_int[:, :, 0] = _clamp_round(mutant[:, :, 0], SENTINEL_POS, length)
        mutant_int[:, :, 1] = _clamp_round(mutant[:, :, 1], 0, n_catalog - 1)

        cross = rng.random((pop_size, budget, 2)) < config.crossover_rate
        forced = rng.integers(0, budget * 2, size=pop_size)
        flat = cross.reshape(pop_size, -1)
        flat[np.arange(pop_size), forced] = True
        trials = np.where(cross, mutant_int, pop)

        trial_losses, trial_genomes, trial_texts = evaluator.score_rows(trials)
        # ties go to the trial, as in classic DE: equal-loss moves keep the
        # population drifting across plateaus instead of freezing
        improved = trial_losses <= losses
        pop[improved] = trials[improved]
        losses[improved] = trial_losses[improved]
        for i in np.flatnonzero(improved):
            genomes[i] = trial_genomes[i]
            texts[i] = trial_texts[i]

        gen_best = int(np.argmin(losses))
        if losses[gen_best] < best[0]:
            best = (losses[gen_best], genomes[gen_best], texts[gen_best])
        history.append(float(best[0]))

    return AttackOutcome(
        best_genome=best[1],
        best_fitness=float(best[0]),
        perturbed_text=best[2],
        history=tuple(history),
        evaluations=evaluator.evaluations,
    )


_ZONE_LADDER: tuple[tuple[str, ...], ...] = (
    ("comment", "string", "identifier"),
    ("comment", "string"),
    ("comment",),
)


def attack_both(
    query: str,
    target: str,
    catalog: InvisibleCatalog,
    char_id: int,
    target_zones: SafetyZones | None = None,
    target_language: str | None = None,
    oracle_command: Sequence[str] | None = None,
) -> tuple[str, str]:
    """The closed-form combined attack: saturate query and target with one
    shared invisible character at every other position.

    The query side is unconstrained. The target side stays inside safety
    zones and must keep parsing: with explicit target_zones the oracle
    verdict is final, otherwise zone kinds are peeled back (identifiers
    first, then strings) until the perturbed code parses.
    """
    dq_genome = every_other_position_genome(query, char_id, None, len(catalog))
    delta_q = apply_genome(query, dq_genome, catalog)

    def perturbed_target(zones: SafetyZones) -> str | None:
        try:
            genome = every_other_position_genome(target, char_id, zones, len(catalog))
        except EmptyZones:
            return None
        candidate = apply_genome(target, genome, catalog)
        language = target_language or zones.language
        try:
            report = syntax_oracle(candidate, language, oracle_command)
        except OracleUnavailable as exc:
            logger.warning("syntax oracle unavailable, accepting unchecked: %s", exc)
            return candidate
        return candidate if report.passed else None

    if target_zones is not None:
        delta_t = perturbed_target(target_zones)
        if delta_t is None:
            raise CompilabilityError(
                "perturbed target fails the syntax oracle inside the given zones"
            )
        return delta_q, delta_t

    if target_language is None:
        raise RagveilError("attack_both needs target_zones or target_language")
    failures = []
    for kinds in _ZONE_LADDER:
        try:
            zones = compute_safety_zones(target, target_language, kinds=kinds)
        except ZoneError as exc:
            failures.append(f"{kinds}: {exc}")
            continue
        if not zones.spans:
            failures.append(f"{kinds}: no zones")
            continue
        delta_t = perturbed_target(zones)
        if delta_t is not None:
            return delta_q, delta_t
        failures.append(f"{kinds}: oracle rejected")
    raise CompilabilityError(
        "no zone restriction yields a parseable perturbed target: "
        + "; ".join(failures)
    )
