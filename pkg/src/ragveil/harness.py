"""Measurement protocol: retrievability sweeps, budget aggregation,
output detection, and the safe-versus-vulnerable alignment experiment.

Every sweep row records the unperturbed baseline rank next to the attack
rank so deltas are always computable, and hit flags are derived from the
rank at report-construction time, which makes hit_k monotone in k by
construction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .attack import (
    AttackScenario,
    DEConfig,
    FitnessContext,
    attack_both,
    optimize,
    select_reference,
)
from .catalog import InvisibleCatalog
from .embedding import cosine
from .errors import EmptyInput, RagveilError
from .retrieval import Corpus, Document, full_ranking, poison
from .textio import read_jsonl, read_text_exact, write_jsonl
from .zones import compute_safety_zones

DEFAULT_K_VALUES = (1, 3, 5)

CSV_COLUMNS = (
    "query_id",
    "target_id",
    "scenario",
    "budget",
    "rank",
    "baseline_rank",
    "sim_target",
    "sim_reference",
    "hit_k1",
    "hit_k3",
    "hit_k5",
    "evaluations",
)


@dataclass(frozen=True)
class Query:
    id: str
    text: str


@dataclass(frozen=True)
class AttackReport:
    """One sweep row: a (query, budget) attack execution and its ranks."""

    query_id: str
    target_id: str
    scenario: str
    budget: float
    rank: int
    baseline_rank: int
    sim_target: float
    sim_reference: float
    k_hits: dict[int, bool]
    evaluations: int
    detected: bool | None = None
    error: str | None = None


def make_report(
    query_id: str,
    target_id: str,
    scenario: str,
    budget: float,
    rank: int,
    baseline_rank: int,
    sim_target: float,
    sim_reference: float,
    evaluations: int,
    k_values: Sequence[int] = DEFAULT_K_VALUES,
) -> AttackReport:
    return AttackReport(
        query_id=query_id,
        target_id=target_id,
        scenario=scenario,
        budget=budget,
        rank=rank,
        baseline_rank=baseline_rank,
        sim_target=sim_target,
        sim_reference=sim_reference,
        k_hits={k: rank <= k for k in k_values},
        evaluations=evaluations,
    )


@dataclass(frozen=True)
class EvalConfig:
    """Shared knobs for sweeps and the alignment experiment."""

    catalog: InvisibleCatalog
    de: DEConfig = field(default_factory=DEConfig)
    k_values: tuple[int, ...] = DEFAULT_K_VALUES
    combined_char_id: int = 0
    oracle_commands: dict = field(default_factory=dict)
    force: bool = False
    alignment_mode: str = "de"

    def __post_init__(self):
        if self.alignment_mode not in ("de", "random"):
            raise RagveilError(f"unknown alignment mode {self.alignment_mode!r}")


def _perturb_for_row(
    query: Query,
    corpus: Corpus,
    target: Document,
    scenario: AttackScenario,
    budget: float,
    embedder,
    cfg: EvalConfig,
) -> tuple[str, str, int]:
    """Run the scenario's attack at one budget; returns
    (perturbed_query, perturbed_target, evaluations)."""
    if budget == 0:
        return query.text, target.text, 0
    oracle_cmd = cfg.oracle_commands.get(target.language)
    if scenario is AttackScenario.PERTURB_BOTH:
        # Closed-form: the saturation density is fixed, the budget only
        # labels the row.
        dq, dt = attack_both(
            query.text,
            target.text,
            cfg.catalog,
            cfg.combined_char_id,
            target_language=target.language,
            oracle_command=oracle_cmd,
        )
        return dq, dt, 0
    de = replace(cfg.de, budget_fraction=budget)
    if scenario is AttackScenario.PERTURB_QUERY:
        reference = select_reference(query.text, corpus, embedder)
        ctx = FitnessContext(
            scenario=scenario,
            query=query.text,
            target=target.text,
            embedder=embedder,
            reference=reference.text,
        )
        outcome = optimize(ctx, de, cfg.catalog, zones=None, force=cfg.force)
        return outcome.perturbed_text, target.text, outcome.evaluations
    if scenario is AttackScenario.PERTURB_TARGET:
        ctx = FitnessContext(
            scenario=scenario,
            query=query.text,
            target=target.text,
            embedder=embedder,
        )
        zones = compute_safety_zones(target.text, target.language, strict=False)
        outcome = optimize(
            ctx,
            de,
            cfg.catalog,
            zones=zones,
            oracle_language=target.language,
            oracle_command=oracle_cmd,
            force=cfg.force,
        )
        return query.text, outcome.perturbed_text, outcome.evaluations
    raise RagveilError(f"unsupported scenario {scenario}")


def _rank_and_sims(
    perturbed_query: str,
    poisoned: Corpus,
    target_id: str,
    reference_id: str | None,
    embedder,
) -> tuple[int, float, float]:
    ranking = full_ranking(perturbed_query, poisoned, embedder)
    rank = sim_target = sim_reference = None
    for position, (doc_id, sim) in enumerate(ranking, start=1):
        if doc_id == target_id:
            rank, sim_target = position, sim
        if reference_id is not None and doc_id == reference_id:
            sim_reference = sim
    return rank, sim_target, (sim_reference if sim_reference is not None else math.nan)


def run_retrievability(
    queries: Sequence[Query],
    corpus: Corpus,
    target: Document,
    scenario: AttackScenario | str,
    budgets: Sequence[float],
    embedder,
    cfg: EvalConfig,
) -> list[AttackReport]:
    """The full sweep: for every (query, budget), attack, poison, retrieve,
    and record. A budget-0 baseline row is always included per query; a row
    that fails keeps its error message instead of aborting the sweep."""
    scenario = AttackScenario(scenario)
    if not budgets:
        raise EmptyInput("budgets must be non-empty")
    if target.id in corpus:
        raise RagveilError(f"target {target.id!r} must not already be in the corpus")
    reports: list[AttackReport] = []
    for query in queries:
        reference = select_reference(query.text, corpus, embedder)
        baseline_poisoned = poison(corpus, target)
        baseline_rank, _, _ = _rank_and_sims(
            query.text, baseline_poisoned, target.id, None, embedder
        )
        for budget in (0.0, *budgets):
            try:
                dq, dt, evaluations = _perturb_for_row(
                    query, corpus, target, scenario, budget, embedder, cfg
                )
                poisoned = poison(corpus, replace(target, text=dt))
                rank, sim_target, sim_reference = _rank_and_sims(
                    dq, poisoned, target.id, reference.id, embedder
                )
                reports.append(
                    make_report(
                        query_id=query.id,
                        target_id=target.id,
                        scenario=scenario.value,
                        budget=budget,
                        rank=rank,
                        baseline_rank=baseline_rank,
                        sim_target=sim_target,
                        sim_reference=sim_reference,
                        evaluations=evaluations,
                        k_values=cfg.k_values,
                    )
                )
            except RagveilError as exc:
                reports.append(
                    AttackReport(
                        query_id=query.id,
                        target_id=target.id,
                        scenario=scenario.value,
                        budget=budget,
                        rank=0,
                        baseline_rank=baseline_rank,
                        sim_target=math.nan,
                        sim_reference=math.nan,
                        k_hits={},
                        evaluations=0,
                        error=str(exc),
                    )
                )
    return reports


def best_across_budgets(reports: Iterable[AttackReport]) -> list[AttackReport]:
    """Per (query, target, scenario): the row with the minimum rank across
    budgets, hits recomputed from that rank. Baseline rows and failed rows
    do not compete."""
    reports = list(reports)
    if not reports:
        raise EmptyInput("no reports to aggregate")
    groups: dict[tuple, AttackReport] = {}
    order: list[tuple] = []
    for rep in reports:
        if rep.error is not None or rep.budget == 0:
            continue
        key = (rep.query_id, rep.target_id, rep.scenario)
        if key not in groups:
            groups[key] = rep
            order.append(key)
        elif rep.rank < groups[key].rank:
            groups[key] = rep
    return [groups[k] for k in order]


@dataclass(frozen=True)
class DetectionRule:
    """How to recognize one adversarial target in generated output."""

    target_tag: str
    method: str
    pattern: str

    def __post_init__(self):
        if self.method not in ("substring", "regex"):
            raise RagveilError(f"unknown detection method {self.method!r}")
        if self.method == "regex":
            try:
                re.compile(self.pattern)
            except re.error as exc:
                raise RagveilError(f"rule {self.target_tag}: bad regex: {exc}") from exc


def detect_target_in_output(output: str, rule: DetectionRule) -> bool:
    """Substring rules match raw text; regex rules match with single-line
    semantics (no DOTALL: '.' stays within a line)."""
    if rule.method == "substring":
        return rule.pattern in output
    return re.search(rule.pattern, output) is not None


def load_detection_rules(path: str | Path) -> list[DetectionRule]:
    return [
        DetectionRule(
            target_tag=str(rec["target_tag"]),
            method=str(rec["method"]),
            pattern=str(rec["pattern"]),
        )
        for rec in read_jsonl(path)
    ]


def attach_detection(
    reports: Sequence[AttackReport],
    outputs_dir: str | Path,
    rule: DetectionRule,
) -> list[AttackReport]:
    """Mark each report with whether the target fires in the externally
    generated output <query_id>.txt; absent files stay unmarked."""
    outputs_dir = Path(outputs_dir)
    out = []
    for rep in reports:
        path = outputs_dir / f"{rep.query_id}.txt"
        detected = (
            detect_target_in_output(read_text_exact(path), rule)
            if path.exists()
            else None
        )
        out.append(replace(rep, detected=detected))
    return out


@dataclass(frozen=True)
class AlignmentPair:
    """A query with its paired safe and vulnerable implementations."""

    pair_id: str
    query: str
    safe_text: str
    vulnerable_text: str
    language: str = "plain-text"


@dataclass(frozen=True)
class AlignmentRecord:
    pair_id: str
    budget: float
    sim_safe: float
    sim_vulnerable: float

    @property
    def flipped(self) -> bool:
        # Ties stay unflipped: the defender gets the benefit of the doubt.
        return self.sim_vulnerable > self.sim_safe


def _random_insertions(
    text: str, count: int, catalog: InvisibleCatalog, rng: np.random.Generator
) -> str:
    out = text
    for _ in range(count):
        pos = int(rng.integers(0, len(out) + 1))
        ch = catalog.char(int(rng.integers(0, len(catalog))))
        out = out[:pos] + ch + out[pos:]
    return out


def run_alignment(
    pairs: Sequence[AlignmentPair],
    budgets: Sequence[float],
    scenario: AttackScenario | str,
    embedder,
    cfg: EvalConfig,
) -> list[AlignmentRecord]:
    """Can a perturbation make the embedder prefer the vulnerable variant?

    perturb_query optimizes the query toward the vulnerable snippet and
    away from the safe one; perturb_target perturbs the vulnerable snippet
    toward the query. A budget-0 row records the baseline preference.
    alignment_mode="random" replaces optimization with seeded random
    insertion at the same budget.
    """
    scenario = AttackScenario(scenario)
    if scenario not in (AttackScenario.PERTURB_QUERY, AttackScenario.PERTURB_TARGET):
        raise RagveilError("alignment supports perturb_query and perturb_target only")
    records: list[AlignmentRecord] = []
    for pair_index, pair in enumerate(pairs):
        safe_v = embedder.embed(pair.safe_text)
        vuln_v = embedder.embed(pair.vulnerable_text)
        query_v = embedder.embed(pair.query)
        records.append(
            AlignmentRecord(
                pair_id=pair.pair_id,
                budget=0.0,
                sim_safe=cosine(query_v, safe_v),
                sim_vulnerable=cosine(query_v, vuln_v),
            )
        )
        for budget_index, budget in enumerate(budgets):
            if budget == 0:
                continue
            if scenario is AttackScenario.PERTURB_QUERY:
                subject = pair.query
            else:
                subject = pair.vulnerable_text
            if cfg.alignment_mode == "random":
                rng = np.random.default_rng(
                    [cfg.de.rng_seed, pair_index, budget_index]
                )
                count = max(1, math.floor(budget * len(subject)))
                perturbed = _random_insertions(subject, count, cfg.catalog, rng)
            else:
                de = replace(
                    cfg.de,
                    budget_fraction=budget,
                    rng_seed=cfg.de.rng_seed + pair_index,
                )
                if scenario is AttackScenario.PERTURB_QUERY:
                    ctx = FitnessContext(
                        scenario=scenario,
                        query=pair.query,
                        target=pair.vulnerable_text,
                        embedder=embedder,
                        reference=pair.safe_text,
                    )
                    outcome = optimize(ctx, de, cfg.catalog, force=cfg.force)
                else:
                    ctx = FitnessContext(
                        scenario=scenario,
                        query=pair.query,
                        target=pair.vulnerable_text,
                        embedder=embedder,
                    )
                    zones = compute_safety_zones(
                        pair.vulnerable_text, pair.language, strict=False
                    )
                    outcome = optimize(
                        ctx,
                        de,
                        cfg.catalog,
                        zones=zones,
                        oracle_language=pair.language,
                        oracle_command=cfg.oracle_commands.get(pair.language),
                        force=cfg.force,
                    )
                perturbed = outcome.perturbed_text
            if scenario is AttackScenario.PERTURB_QUERY:
                pv = embedder.embed(perturbed)
                sim_safe = cosine(pv, safe_v)
                sim_vuln = cosine(pv, vuln_v)
            else:
                sim_safe = cosine(query_v, safe_v)
                sim_vuln = cosine(query_v, embedder.embed(perturbed))
            records.append(
                AlignmentRecord(
                    pair_id=pair.pair_id,
                    budget=budget,
                    sim_safe=sim_safe,
                    sim_vulnerable=sim_vuln,
                )
            )
    return records


def best_alignment_across_budgets(
    records: Iterable[AlignmentRecord],
) -> list[AlignmentRecord]:
    """Per pair, the most attacker-favorable record (maximum margin of
    vulnerable over safe) among the perturbed rows."""
    groups: dict[str, AlignmentRecord] = {}
    order: list[str] = []
    for rec in records:
        if rec.budget == 0:
            continue
        margin = rec.sim_vulnerable - rec.sim_safe
        if rec.pair_id not in groups:
            groups[rec.pair_id] = rec
            order.append(rec.pair_id)
        elif margin > groups[rec.pair_id].sim_vulnerable - groups[rec.pair_id].sim_safe:
            groups[rec.pair_id] = rec
    return [groups[p] for p in order]


def round_percentage(value: float) -> float:
    """Two decimals, half-up."""
    return float(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def summarize_reports(reports: Sequence[AttackReport], k_values=DEFAULT_K_VALUES) -> dict:
    """Per (scenario, target) success percentages at each k, computed over
    non-baseline, non-failed rows."""
    groups: dict[tuple[str, str], list[AttackReport]] = {}
    for rep in reports:
        if rep.error is not None or rep.budget == 0:
            continue
        groups.setdefault((rep.scenario, rep.target_id), []).append(rep)
    cells = []
    for (scenario, target_id), rows in sorted(groups.items()):
        pct = {
            str(k): round_percentage(
                100.0 * sum(1 for r in rows if r.k_hits.get(k, False)) / len(rows)
            )
            for k in k_values
        }
        cells.append(
            {
                "scenario": scenario,
                "target_id": target_id,
                "rows": len(rows),
                "queries": len({r.query_id for r in rows}),
                "success_pct": pct,
            }
        )
    failed = [
        {"query_id": r.query_id, "budget": r.budget, "error": r.error}
        for r in reports
        if r.error is not None
    ]
    summary = {"cells": cells, "failed_rows": failed}
    detected = [r for r in reports if r.detected is not None]
    if detected:
        hits = sum(1 for r in detected if r.detected)
        summary["detection"] = {
            "outputs_scanned": len(detected),
            "target_present": hits,
            "present_pct": round_percentage(100.0 * hits / len(detected)),
        }
    return summary


def emit_report(
    reports: Sequence[AttackReport],
    out_dir: str | Path,
    basename: str = "report",
    meta: dict | None = None,
    k_values=DEFAULT_K_VALUES,
) -> dict[str, Path]:
    """Write the row-level CSV and the JSON summary.

    Failed rows appear only in the summary; the CSV carries completed rows
    in input order. The summary embeds the CSV digest so the two files are
    bound together.
    """
    reports = list(reports)
    if not reports:
        raise EmptyInput("no reports to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{basename}.csv"
    json_path = out_dir / f"{basename}.json"

    with_detection = any(r.detected is not None for r in reports)
    columns = CSV_COLUMNS + (("detected",) if with_detection else ())
    lines = [",".join(columns)]
    for r in reports:
        if r.error is not None:
            continue
        row = [
            r.query_id,
            r.target_id,
            r.scenario,
            r.budget,
            r.rank,
            r.baseline_rank,
            r.sim_target,
            r.sim_reference,
            r.k_hits.get(1, False),
            r.k_hits.get(3, False),
            r.k_hits.get(5, False),
            r.evaluations,
        ]
        if with_detection:
            row.append("" if r.detected is None else r.detected)
        lines.append(",".join(_csv_cell(v) for v in row))
    csv_path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))

    from .textio import sha256_file

    summary = {
        "meta": meta or {},
        "csv_file": csv_path.name,
        "csv_sha256": sha256_file(csv_path),
        **summarize_reports(reports, k_values=k_values),
    }
    import json as _json

    json_path.write_bytes(
        (_json.dumps(summary, indent=2, sort_keys=True, ensure_ascii=True) + "\n").encode("ascii")
    )
    return {"csv": csv_path, "json": json_path}


def load_queries_jsonl(path: str | Path) -> list[Query]:
    return [Query(id=str(r["id"]), text=str(r["text"])) for r in read_jsonl(path)]


def load_alignment_pairs_jsonl(path: str | Path) -> list[AlignmentPair]:
    return [
        AlignmentPair(
            pair_id=str(r["pair_id"]),
            query=str(r["query"]),
            safe_text=str(r["safe_text"]),
            vulnerable_text=str(r["vulnerable_text"]),
            language=str(r.get("language", "plain-text")),
        )
        for r in read_jsonl(path)
    ]


def write_alignment_records(records: Sequence[AlignmentRecord], path: str | Path) -> None:
    write_jsonl(
        path,
        (
            {
                "pair_id": r.pair_id,
                "budget": r.budget,
                "sim_safe": r.sim_safe,
                "sim_vulnerable": r.sim_vulnerable,
                "flipped": r.flipped,
            }
            for r in records
        ),
    )
