"""Exit criteria for the toolkit, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL
line per criterion. Tolerances are pinned here, not calibrated elsewhere.
"""

import json
import math
import random
import shutil
import time
from dataclasses import replace
from pathlib import Path

import pytest

from ragveil.attack import (
    AttackScenario,
    DEConfig,
    FitnessContext,
    attack_both,
    loss_target,
    optimize,
)
from ragveil.catalog import InvisibleCatalog, default_catalog
from ragveil.cli import main as cli_main
from ragveil.embedding import HashedTrigramEmbedder
from ragveil.errors import OracleUnavailable
from ragveil.harness import (
    DEFAULT_K_VALUES,
    EvalConfig,
    best_across_budgets,
    detect_target_in_output,
    emit_report,
    load_detection_rules,
    run_retrievability,
)
from ragveil.perturb import Genome, apply_genome
from ragveil.retrieval import poison, rank_of, retrieve_k
from ragveil.sanitize import SanitizePolicy, defended_retrieve, strip
from ragveil.zones import JAVA_LIKE, syntax_oracle

FIXTURES = Path(__file__).parent / "fixtures"
RULES_PATH = Path(__file__).parent.parent / "src/ragveil/data/detection_rules.jsonl"

CATALOG = default_catalog()
POLICY = SanitizePolicy.default(CATALOG)


def verdict(name: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


# --- criterion: strip round trip, 1000 randomized pairs, zero tolerance ---

SAFE_ALPHABET = (
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    " \t\n()[]{}<>#'\"=+-*/%._,:;!?"
    "éüßπλЖ中日"
)


def test_strip_round_trip_1000_pairs():
    rng = random.Random(0xC0FFEE)
    assert all(ord(ch) not in POLICY.strip_set for ch in SAFE_ALPHABET)
    failures = 0
    for _ in range(1000):
        text = "".join(
            rng.choice(SAFE_ALPHABET) for _ in range(rng.randint(0, 80))
        )
        genome = Genome.from_pairs(
            (rng.randint(-1, len(text)), rng.randint(0, len(CATALOG) - 1))
            for _ in range(rng.randint(0, 12))
        )
        perturbed = apply_genome(text, genome, CATALOG)
        if strip(perturbed, POLICY) != text:
            failures += 1
    verdict("strip-round-trip", failures == 0, f"{failures}/1000 failures")


# --- criterion: DE equals exhaustive search at M=1 on >= 19/20 instances ---

ORACLE_CATALOG = InvisibleCatalog(
    entries=(0x200B, 0x200C, 0x200D, 0x2060, 0x2062, 0x2063, 0x2064, 0xFEFF),
    source_tag="acceptance-8",
)

ORACLE_INSTANCES = [
    ("sort a list of numbers", "sorted(values) builds a new list"),
    ("reverse a string", "text[::-1] walks backwards"),
    ("read a file line by line", "for line in open(path): use it"),
    ("parse json from a string", "json.loads(payload) returns a dict"),
    ("join list items with commas", "', '.join(items) concatenates"),
    ("find the maximum value", "max(numbers) scans once"),
    ("count word frequencies", "Counter(words) tallies them"),
    ("strip whitespace from text", "text.strip() trims both ends"),
    ("check if a key exists", "key in mapping answers it"),
    ("format a float to 2 places", "f'{x:.2f}' renders it"),
    ("copy a file to a new path", "shutil.copy(src, dst) does it"),
    ("get the current timestamp", "time.time() in epoch seconds"),
    ("generate a random integer", "random.randint(1, 6) rolls"),
    ("zip two lists together", "zip(a, b) pairs them up"),
    ("flatten nested lists", "chain.from_iterable(rows)"),
    ("hash a password safely", "use hashlib scrypt with salt"),
    ("make an http get request", "requests.get(url, timeout=5)"),
    ("walk a directory tree", "os.walk(root) yields triples"),
    ("compute a running average", "total / count as you stream"),
    ("deduplicate keeping order", "dict.fromkeys(seq) preserves"),
]

ORACLE_SEED_BASE = 2000


def test_de_oracle_equivalence():
    assert all(len(subject) <= 40 for _, subject in ORACLE_INSTANCES)
    embedder = HashedTrigramEmbedder()
    started = time.monotonic()
    matches = 0
    for i, (query, subject) in enumerate(ORACLE_INSTANCES):
        ctx = FitnessContext(
            scenario=AttackScenario.PERTURB_TARGET,
            query=query,
            target=subject,
            embedder=embedder,
        )
        # independent oracle: enumerate every single-insertion candidate
        best_exhaustive = loss_target(query, subject, ctx)
        for pos in range(len(subject) + 1):
            for char_id in range(len(ORACLE_CATALOG)):
                candidate = apply_genome(
                    subject, Genome.from_pairs([(pos, char_id)]), ORACLE_CATALOG
                )
                best_exhaustive = min(best_exhaustive, loss_target(query, candidate, ctx))
        config = DEConfig(
            population_size=32,
            max_generations=50,
            budget_fraction=1.0 / len(subject),  # M = 1
            rng_seed=ORACLE_SEED_BASE + i,
        )
        outcome = optimize(ctx, config, ORACLE_CATALOG)
        if abs(outcome.best_fitness - best_exhaustive) <= 1e-9:
            matches += 1
    elapsed = time.monotonic() - started
    verdict(
        "de-oracle-equivalence",
        matches >= 19 and elapsed < 60.0,
        f"{matches}/20 matched, {elapsed:.1f}s",
    )


# --- criterion: combined attack reaches rank 1 on >= 9/10 fixture queries ---


def test_combined_attack_dominance(embedder, fixture_corpus, fixture_queries,
                                   adversarial_target):
    started = time.monotonic()
    char_id = CATALOG.id_of("​")
    rank_one = 0
    for query in fixture_queries:
        dq, dt = attack_both(
            query.text,
            adversarial_target.text,
            CATALOG,
            char_id,
            target_language=adversarial_target.language,
        )
        poisoned = poison(fixture_corpus, replace(adversarial_target, text=dt))
        if rank_of(dq, poisoned, adversarial_target.id, embedder) == 1:
            rank_one += 1
    elapsed = time.monotonic() - started
    verdict(
        "combined-attack-dominance",
        rank_one >= 9 and elapsed < 10.0,
        f"rank-1 on {rank_one}/10 queries, {elapsed:.1f}s",
    )


# --- criterion: k-monotonicity and hit<->rank consistency, zero violations ---


def test_k_monotonicity_and_ret_succ_consistency(
    embedder, fixture_corpus, fixture_queries, adversarial_target, tmp_path
):
    cfg = EvalConfig(
        catalog=CATALOG,
        de=DEConfig(population_size=8, max_generations=2, rng_seed=5),
    )
    reports = []
    for scenario, budgets, queries in (
        (AttackScenario.PERTURB_BOTH, [0.1], fixture_queries),
        (AttackScenario.PERTURB_QUERY, [0.1, 0.2], fixture_queries[:3]),
        (AttackScenario.PERTURB_TARGET, [0.1], fixture_queries[:3]),
    ):
        reports += run_retrievability(
            queries, fixture_corpus, adversarial_target, scenario, budgets,
            embedder, cfg,
        )
    reports += best_across_budgets(reports)

    violations = 0
    for rep in reports:
        if rep.error is not None:
            violations += 1
            continue
        for k in DEFAULT_K_VALUES:
            if rep.k_hits[k] != (rep.rank <= k):
                violations += 1
        if rep.k_hits[1] and not rep.k_hits[3]:
            violations += 1
        if rep.k_hits[3] and not rep.k_hits[5]:
            violations += 1

    # the emitted artifact satisfies the same invariants
    paths = emit_report(reports, tmp_path, "acceptance")
    import csv as _csv

    with open(paths["csv"], newline="") as fh:
        for row in _csv.DictReader(fh):
            hits = [row["hit_k1"] == "true", row["hit_k3"] == "true", row["hit_k5"] == "true"]
            rank = int(row["rank"])
            if hits != [rank <= 1, rank <= 3, rank <= 5]:
                violations += 1

    # ret_succ: membership in the top-k equals rank <= k
    for query in fixture_queries[:3]:
        poisoned = poison(fixture_corpus, adversarial_target)
        rank = rank_of(query.text, poisoned, adversarial_target.id, embedder)
        for k in DEFAULT_K_VALUES:
            member = adversarial_target.id in retrieve_k(query.text, poisoned, k, embedder)
            if member != (rank <= k):
                violations += 1

    verdict("k-monotonicity-ret-succ", violations == 0, f"{violations} violations")


# --- criterion: zone-restricted combined strategy keeps targets parseable ---


def test_compilability_of_perturbed_targets(targets):
    results = []
    char_id = CATALOG.id_of("​")
    for tag in ("target_a", "target_c1", "target_c2", "target_c3", "target_c4"):
        code, language = targets[tag]
        _, dt = attack_both("probe query", code, CATALOG, char_id, target_language=language)
        report = syntax_oracle(dt, language)
        results.append((tag, report.passed))
    java_note = "skipped: no java-like oracle configured in this environment"
    code_b, _ = targets["target_b"]
    if shutil.which("javac"):
        _, dt = attack_both("probe query", code_b, CATALOG, char_id, target_language=JAVA_LIKE)
        results.append(("target_b", syntax_oracle(dt, JAVA_LIKE).passed))
        java_note = "javac oracle"
    else:
        with pytest.raises(OracleUnavailable):
            syntax_oracle(code_b, JAVA_LIKE)
    ok = all(passed for _, passed in results)
    verdict(
        "compilability",
        ok,
        ", ".join(f"{t}={'ok' if p else 'FAIL'}" for t, p in results)
        + f"; target_b {java_note}",
    )


# --- criterion: detection rules fire on their own targets; crossfire pinned ---


def test_detection_fixtures(targets):
    rules = {r.target_tag: r for r in load_detection_rules(RULES_PATH)}
    own_fires = {
        "target_a": detect_target_in_output(targets["target_a"][0], rules["target_a"]),
        "target_b": detect_target_in_output(targets["target_b"][0], rules["target_b"]),
        "target_c1": detect_target_in_output(targets["target_c1"][0], rules["target_c1"]),
        "target_c2": detect_target_in_output(targets["target_c2"][0], rules["target_c2"]),
        "target_c4": detect_target_in_output(targets["target_c4"][0], rules["target_c4"]),
    }
    pinned = json.loads((FIXTURES / "crossfire.json").read_text())["expected_fires"]
    crossfire_holds = True
    for rule in rules.values():
        fired = sorted(
            tag
            for tag, (text, _) in targets.items()
            if detect_target_in_output(text, rule)
        )
        if fired != pinned[rule.target_tag]:
            crossfire_holds = False
    ok = all(own_fires.values()) and crossfire_holds
    verdict(
        "detection-fixtures",
        ok,
        f"own-target fires {sum(own_fires.values())}/5, crossfire pinned={crossfire_holds}",
    )


# --- criterion: the defense restores clean ranks against every attack ---


def test_defense_neutralizes_all_toolkit_attacks(
    embedder, fixture_corpus, fixture_queries, adversarial_target
):
    mismatches = 0
    checked = 0
    clean_poisoned = poison(fixture_corpus, adversarial_target)
    char_id = CATALOG.id_of("​")

    def defended_rank(perturbed_query, perturbed_target_text):
        poisoned = poison(
            fixture_corpus, replace(adversarial_target, text=perturbed_target_text)
        )
        ranking = defended_retrieve(
            perturbed_query, poisoned, len(poisoned), embedder, POLICY
        )
        return 1 + ranking.ids().index(adversarial_target.id)

    for query in fixture_queries[:5]:
        clean_rank = rank_of(
            query.text, clean_poisoned, adversarial_target.id, embedder
        )
        # combined attack
        dq, dt = attack_both(
            query.text, adversarial_target.text, CATALOG, char_id,
            target_language=adversarial_target.language,
        )
        attacks = [(dq, dt)]
        # optimized query attack
        ctx = FitnessContext(
            scenario=AttackScenario.PERTURB_QUERY,
            query=query.text,
            target=adversarial_target.text,
            embedder=embedder,
            allow_no_reference=True,
        )
        outcome = optimize(
            ctx,
            DEConfig(population_size=8, max_generations=2, budget_fraction=0.2, rng_seed=13),
            CATALOG,
        )
        attacks.append((outcome.perturbed_text, adversarial_target.text))
        # optimized target attack
        ctx = FitnessContext(
            scenario=AttackScenario.PERTURB_TARGET,
            query=query.text,
            target=adversarial_target.text,
            embedder=embedder,
        )
        from ragveil.zones import compute_safety_zones

        zones = compute_safety_zones(
            adversarial_target.text, adversarial_target.language, strict=False
        )
        outcome = optimize(
            ctx,
            DEConfig(population_size=8, max_generations=2, budget_fraction=0.2, rng_seed=17),
            CATALOG,
            zones=zones,
            oracle_language=adversarial_target.language,
        )
        attacks.append((query.text, outcome.perturbed_text))

        for dq_text, dt_text in attacks:
            checked += 1
            if defended_rank(dq_text, dt_text) != clean_rank:
                mismatches += 1

    verdict(
        "defense-efficacy",
        mismatches == 0,
        f"{checked} attacks checked, {mismatches} rank mismatches",
    )


# --- criterion: fixed-seed manifest runs are byte-identical ---


def test_determinism_byte_identical_artifacts(tmp_path, targets):
    corpus_path = tmp_path / "corpus.jsonl"
    queries_path = tmp_path / "queries.jsonl"
    target_path = tmp_path / "target.py"
    from .conftest import QUERY_TEXTS, SNIPPETS

    corpus_path.write_text(
        "\n".join(
            json.dumps(
                {"id": i, "text": t, "language": "python-like", "label": "safe"}
            )
            for i, t in SNIPPETS
        )
        + "\n"
    )
    queries_path.write_text(
        "\n".join(json.dumps({"id": q, "text": t}) for q, t in QUERY_TEXTS[:3]) + "\n"
    )
    target_path.write_text(targets["target_a"][0])
    manifest = {
        "seed": 424242,
        "embedder": {"kind": "reference"},
        "corpus": {"records": str(corpus_path)},
        "queries": {"records": str(queries_path)},
        "target": {
            "id": "adv_target",
            "file": str(target_path),
            "language": "python-like",
        },
        "scenario": "perturb_query",
        "budgets": [0.1, 0.2],
        "de": {"population_size": 8, "max_generations": 2},
    }
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(json.dumps(manifest))

    snapshots = []
    for run_dir in ("one", "two"):
        out = tmp_path / run_dir
        assert cli_main(["attack", "--manifest", str(manifest_path), "--out-dir", str(out)]) == 0
        assert cli_main(["eval", "--manifest", str(manifest_path), "--out-dir", str(out)]) == 0
        snapshots.append(
            {
                name: (out / name).read_bytes()
                for name in (
                    "outcomes.jsonl",
                    "report.csv",
                    "report.json",
                    "report_best.csv",
                    "report_best.json",
                )
            }
        )
    identical = all(snapshots[0][name] == snapshots[1][name] for name in snapshots[0])
    verdict(
        "determinism",
        identical,
        f"{len(snapshots[0])} artifact files compared byte-for-byte",
    )
