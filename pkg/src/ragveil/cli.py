"""Command-line entry point: manifest-driven, reproducible runs.

Sweeps touch many axes at once (scenario x budget x k x target), so runs
are described by a JSON manifest and a handful of flags override its
fields. Every output artifact embeds the seed, the catalog digest, the
embedder identity, and the manifest digest, so any result can be traced
back to its exact inputs and re-run.

Exit codes are a stable contract:
  0 success, 1 validation failure, 2 run failure,
  3 insensitive embedder, 4 connectivity failure.

Perturbed text is never printed raw: artifacts carry it as escaped code
points so the toolkit's own outputs cannot smuggle invisible payloads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema

from . import harness
from .attack import (
    AttackScenario,
    DEConfig,
    FitnessContext,
    attack_both,
    optimize,
    select_reference,
)
from .catalog import InvisibleCatalog, default_catalog, load_catalog
from .embedding import HashedTrigramEmbedder, RemoteEmbedder, sensitivity_probe
from .errors import (
    InsensitiveEmbedder,
    ManifestError,
    RagveilError,
    RemoteError,
)
from .perturb import genome_to_pairs
from .retrieval import Document, load_corpus_dir, load_corpus_jsonl, save_corpus_jsonl
from .sanitize import SanitizePolicy, findings_records, strip
from .textio import (
    escape_text,
    read_text_exact,
    sha256_text,
    write_jsonl,
    write_text_exact,
)
from .zones import PLAIN_TEXT, compute_safety_zones

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUN_FAILURE = 2
EXIT_INSENSITIVE = 3
EXIT_CONNECTIVITY = 4

ENDPOINT_ENV_VAR = "RAGVEIL_EMBED_ENDPOINT"

_DEFAULT_PROBE_SAMPLES = (
    "def binary_search(items, needle):",
    "SELECT name FROM users WHERE id = ?",
    "print('hello world')",
)


def _error_record(kind: str, message: str, **extra) -> None:
    rec = {"error": kind, "message": message, **extra}
    print(json.dumps(rec, ensure_ascii=True, sort_keys=True), file=sys.stderr)


class RunContext:
    """Everything resolved from one manifest + flag overrides."""

    def __init__(self, manifest: dict, manifest_digest: str):
        self.manifest = manifest
        self.manifest_digest = manifest_digest
        self.seed = int(manifest.get("seed", 0))
        self.catalog = self._load_catalog()
        self.embedder = self._build_embedder()
        self.out_dir = Path(manifest.get("out_dir", "."))

    def _load_catalog(self) -> InvisibleCatalog:
        path = self.manifest.get("catalog")
        if path is None:
            return default_catalog()
        if not Path(path).exists():
            raise ManifestError(f"catalog path does not exist: {path}")
        return load_catalog(path)

    def _build_embedder(self):
        spec = self.manifest.get("embedder", {"kind": "reference"})
        endpoint_override = os.environ.get(ENDPOINT_ENV_VAR)
        if endpoint_override:
            spec = {"kind": "remote", "endpoint": endpoint_override}
        if spec["kind"] == "reference":
            return HashedTrigramEmbedder()
        endpoint = spec.get("endpoint")
        if not endpoint:
            raise ManifestError("remote embedder needs an endpoint")
        return RemoteEmbedder(endpoint)

    def meta(self, command: str) -> dict:
        return {
            "record_type": "meta",
            "command": command,
            "seed": self.seed,
            "catalog_digest": self.catalog.digest(),
            "embedder": self.embedder.identity,
            "manifest_digest": self.manifest_digest,
        }

    def de_config(self, budget_fraction: float = 0.1) -> DEConfig:
        de = self.manifest.get("de", {})
        return DEConfig(
            population_size=int(de.get("population_size", 32)),
            max_generations=int(de.get("max_generations", 3)),
            differential_weight=float(de.get("differential_weight", 0.8)),
            crossover_rate=float(de.get("crossover_rate", 0.7)),
            budget_fraction=budget_fraction,
            rng_seed=self.seed,
        )

    def combined_char_id(self) -> int:
        spec = self.manifest.get("combined_char")
        if spec is None:
            return 0
        cp = int(spec[2:], 16)
        try:
            return self.catalog.id_of(chr(cp))
        except KeyError:
            raise ManifestError(f"combined_char {spec} is not in the catalog") from None

    def oracle_commands(self) -> dict:
        return {
            lang: tuple(cmd) for lang, cmd in self.manifest.get("oracles", {}).items()
        }

    def eval_config(self) -> harness.EvalConfig:
        return harness.EvalConfig(
            catalog=self.catalog,
            de=self.de_config(),
            k_values=tuple(self.manifest.get("k", harness.DEFAULT_K_VALUES)),
            combined_char_id=self.combined_char_id(),
            oracle_commands=self.oracle_commands(),
            force=bool(self.manifest.get("force", False)),
            alignment_mode=self.manifest.get("alignment_mode", "de"),
        )

    def load_corpus(self):
        spec = self.manifest.get("corpus")
        if not spec:
            raise ManifestError("manifest needs a corpus")
        if "records" in spec:
            if not Path(spec["records"]).exists():
                raise ManifestError(f"corpus records not found: {spec['records']}")
            corpus = load_corpus_jsonl(spec["records"])
        elif "directory" in spec:
            if not Path(spec["directory"]).is_dir():
                raise ManifestError(f"corpus directory not found: {spec['directory']}")
            corpus = load_corpus_dir(spec["directory"])
        else:
            raise ManifestError("corpus needs 'records' or 'directory'")
        labels = self.manifest.get("labels_filter")
        return corpus.subset(labels) if labels else corpus

    def load_target(self) -> Document:
        spec = self.manifest.get("target")
        if not spec:
            raise ManifestError("manifest needs a target")
        if "file" in spec:
            if not Path(spec["file"]).exists():
                raise ManifestError(f"target file not found: {spec['file']}")
            text = read_text_exact(spec["file"])
        elif "text" in spec:
            text = spec["text"]
        else:
            raise ManifestError("target needs 'file' or 'text'")
        return Document(
            id=spec["id"],
            text=text,
            language=spec.get("language", PLAIN_TEXT),
            label="adversarial",
        )

    def load_queries(self) -> list[harness.Query]:
        spec = self.manifest.get("queries")
        if not spec:
            raise ManifestError("manifest needs queries")
        if "records" in spec:
            if not Path(spec["records"]).exists():
                raise ManifestError(f"queries records not found: {spec['records']}")
            return harness.load_queries_jsonl(spec["records"])
        if "inline" in spec:
            return [harness.Query(id=q["id"], text=q["text"]) for q in spec["inline"]]
        raise ManifestError("queries need 'records' or 'inline'")


def load_manifest(path: str | None, overrides: dict) -> tuple[dict, str]:
    if path is not None:
        if not Path(path).exists():
            raise ManifestError(f"manifest not found: {path}")
        raw = read_text_exact(path)
        try:
            manifest = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    else:
        raw = "{}"
        manifest = {}
    manifest.update({k: v for k, v in overrides.items() if v is not None})
    schema = json.loads(
        resources.files("ragveil.data").joinpath("manifest.schema.json").read_text()
    )
    try:
        jsonschema.validate(manifest, schema)
    except jsonschema.ValidationError as exc:
        raise ManifestError(f"manifest schema violation: {exc.message}") from exc
    # The digest pins the experiment, not its output location: identical
    # configs written to different directories stay byte-identical.
    digestable = {k: v for k, v in manifest.items() if k not in ("out_dir", "output")}
    digest = sha256_text(json.dumps(digestable, sort_keys=True, ensure_ascii=True))
    return manifest, digest


def _probe(ctx: RunContext) -> tuple[bool, dict]:
    samples = tuple(ctx.manifest.get("probe_samples", _DEFAULT_PROBE_SAMPLES))
    report = sensitivity_probe(ctx.embedder, samples, ctx.catalog)
    record = {
        "sensitive": report.sensitive,
        "mean_shift": report.mean_shift,
        "samples": len(samples),
        "embedder": ctx.embedder.identity,
    }
    if isinstance(ctx.embedder, RemoteEmbedder):
        record["echo_faithful"] = ctx.embedder.echo_roundtrip(
            [samples[0], samples[0] + ctx.catalog.char(0)]
        )
    return report.sensitive, record


def _require_sensitive(ctx: RunContext) -> None:
    """Remote embedders are probed before any attack; reference embedders
    are sensitive by construction and skip the round trips."""
    if isinstance(ctx.embedder, HashedTrigramEmbedder):
        return
    if bool(ctx.manifest.get("force", False)):
        return
    sensitive, _ = _probe(ctx)
    if not sensitive:
        raise InsensitiveEmbedder(
            "remote embedder ignores invisible insertions; set force=true to override"
        )


def cmd_attack(ctx: RunContext) -> int:
    scenario = AttackScenario(ctx.manifest.get("scenario", "perturb_both"))
    budgets = ctx.manifest.get("budgets", [0.1])
    queries = ctx.load_queries()
    target = ctx.load_target()
    _require_sensitive(ctx)
    corpus = ctx.load_corpus() if scenario is AttackScenario.PERTURB_QUERY else None

    records: list[dict] = [ctx.meta("attack") | {"scenario": scenario.value}]
    successes = failures = 0
    oracle_cmd = ctx.oracle_commands().get(target.language)
    for query in queries:
        for budget in budgets:
            rec = {
                "record_type": "outcome",
                "query_id": query.id,
                "target_id": target.id,
                "scenario": scenario.value,
                "budget": budget,
            }
            try:
                if scenario is AttackScenario.PERTURB_BOTH:
                    dq, dt = attack_both(
                        query.text,
                        target.text,
                        ctx.catalog,
                        ctx.combined_char_id(),
                        target_language=target.language,
                        oracle_command=oracle_cmd,
                    )
                    rec |= {
                        "perturbed_query": escape_text(dq),
                        "perturbed_target": escape_text(dt),
                        "evaluations": 0,
                    }
                else:
                    if scenario is AttackScenario.PERTURB_QUERY:
                        reference = select_reference(query.text, corpus, ctx.embedder)
                        fctx = FitnessContext(
                            scenario=scenario,
                            query=query.text,
                            target=target.text,
                            embedder=ctx.embedder,
                            reference=reference.text,
                        )
                        zones = None
                    else:
                        fctx = FitnessContext(
                            scenario=scenario,
                            query=query.text,
                            target=target.text,
                            embedder=ctx.embedder,
                        )
                        zones = compute_safety_zones(
                            target.text, target.language, strict=False
                        )
                    outcome = optimize(
                        fctx,
                        ctx.de_config(budget_fraction=budget),
                        ctx.catalog,
                        zones=zones,
                        oracle_language=target.language,
                        oracle_command=oracle_cmd,
                        force=bool(ctx.manifest.get("force", False)),
                    )
                    key = (
                        "perturbed_query"
                        if scenario is AttackScenario.PERTURB_QUERY
                        else "perturbed_target"
                    )
                    rec |= {
                        key: escape_text(outcome.perturbed_text),
                        "best_fitness": outcome.best_fitness,
                        "evaluations": outcome.evaluations,
                        "history": list(outcome.history),
                        "genome": genome_to_pairs(outcome.best_genome),
                    }
                successes += 1
            except RagveilError as exc:
                rec |= {"error": type(exc).__name__, "message": str(exc)}
                failures += 1
            records.append(rec)

    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(ctx.out_dir / "outcomes.jsonl", records)
    if successes == 0:
        return EXIT_RUN_FAILURE
    return EXIT_OK


def cmd_eval(ctx: RunContext) -> int:
    scenario = AttackScenario(ctx.manifest.get("scenario", "perturb_both"))
    budgets = ctx.manifest.get("budgets", [0.1])
    queries = ctx.load_queries()
    if not queries:
        raise ManifestError("query set is empty")
    target = ctx.load_target()
    corpus = ctx.load_corpus()
    _require_sensitive(ctx)
    cfg = ctx.eval_config()

    reports = harness.run_retrievability(
        queries, corpus, target, scenario, budgets, ctx.embedder, cfg
    )
    rules_path = ctx.manifest.get("detection_rules")
    outputs_dir = ctx.manifest.get("generation_outputs")
    if rules_path and outputs_dir:
        rules = harness.load_detection_rules(rules_path)
        tag = ctx.manifest.get("target_tag", target.id)
        matching = [r for r in rules if r.target_tag == tag]
        if not matching:
            raise ManifestError(f"no detection rule tagged {tag!r} in {rules_path}")
        reports = harness.attach_detection(reports, outputs_dir, matching[0])

    meta = ctx.meta("eval")
    paths = harness.emit_report(
        reports, ctx.out_dir, "report", meta=meta, k_values=cfg.k_values
    )
    aggregated = harness.best_across_budgets(reports)
    if aggregated:
        paths |= harness.emit_report(
            aggregated, ctx.out_dir, "report_best", meta=meta, k_values=cfg.k_values
        )
    ok_rows = [r for r in reports if r.error is None]
    if not ok_rows:
        return EXIT_RUN_FAILURE
    return EXIT_OK


def cmd_align(ctx: RunContext) -> int:
    spec = ctx.manifest.get("pairs")
    if not spec or "records" not in spec:
        raise ManifestError("align needs pairs.records")
    if not Path(spec["records"]).exists():
        raise ManifestError(f"pairs records not found: {spec['records']}")
    pairs = harness.load_alignment_pairs_jsonl(spec["records"])
    scenario = AttackScenario(ctx.manifest.get("scenario", "perturb_query"))
    budgets = ctx.manifest.get("budgets", [0.05, 0.1, 0.2])
    _require_sensitive(ctx)
    cfg = ctx.eval_config()

    records = harness.run_alignment(pairs, budgets, scenario, ctx.embedder, cfg)
    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    rows = [ctx.meta("align") | {"scenario": scenario.value}]
    rows += [
        {
            "record_type": "alignment",
            "pair_id": r.pair_id,
            "budget": r.budget,
            "sim_safe": r.sim_safe,
            "sim_vulnerable": r.sim_vulnerable,
            "flipped": r.flipped,
        }
        for r in records
    ]
    write_jsonl(ctx.out_dir / "alignment.jsonl", rows)

    per_budget: dict[float, list[harness.AlignmentRecord]] = {}
    for r in records:
        per_budget.setdefault(r.budget, []).append(r)
    best = harness.best_alignment_across_budgets(records)
    summary = {
        "meta": ctx.meta("align"),
        "flip_rate_by_budget": {
            repr(b): harness.round_percentage(
                100.0 * sum(1 for r in rs if r.flipped) / len(rs)
            )
            for b, rs in sorted(per_budget.items())
        },
        "flip_rate_best_across_budgets": harness.round_percentage(
            100.0 * sum(1 for r in best if r.flipped) / len(best)
        )
        if best
        else None,
        "pairs": len({r.pair_id for r in records}),
    }
    (ctx.out_dir / "alignment_summary.json").write_bytes(
        (json.dumps(summary, indent=2, sort_keys=True, ensure_ascii=True) + "\n").encode()
    )
    return EXIT_OK


def cmd_probe(ctx: RunContext) -> int:
    sensitive, record = _probe(ctx)
    print(json.dumps(record | ctx.meta("probe"), ensure_ascii=True, sort_keys=True))
    return EXIT_OK if sensitive else EXIT_INSENSITIVE


def cmd_ingest(ctx: RunContext) -> int:
    corpus = ctx.load_corpus()
    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    out = ctx.out_dir / "corpus.jsonl"
    save_corpus_jsonl(corpus, out)
    existing = out.read_bytes()
    meta_line = json.dumps(
        ctx.meta("ingest"), ensure_ascii=True, sort_keys=True, separators=(",", ":")
    )
    out.write_bytes(meta_line.encode("ascii") + b"\n" + existing)
    print(
        json.dumps(
            ctx.meta("ingest")
            | {"documents": len(corpus), "output": str(out)},
            ensure_ascii=True,
            sort_keys=True,
        )
    )
    return EXIT_OK


def cmd_sanitize(ctx: RunContext, mode: str) -> int:
    input_path = ctx.manifest.get("input")
    if not input_path:
        raise ManifestError("sanitize needs an input file")
    if not Path(input_path).exists():
        raise ManifestError(f"input not found: {input_path}")
    text = read_text_exact(input_path)
    policy = SanitizePolicy.default(
        ctx.catalog,
        preserve_emoji_joiners=bool(ctx.manifest.get("preserve_emoji_joiners", False)),
        map_to_sentinel=bool(ctx.manifest.get("map_to_sentinel", False)),
    )
    output_path = ctx.manifest.get("output")
    if mode == "scan":
        records = findings_records(text, policy)
        if output_path:
            write_jsonl(output_path, [ctx.meta("sanitize-scan"), *records])
        else:
            for rec in records:
                print(json.dumps(rec, ensure_ascii=True, sort_keys=True))
        print(
            json.dumps(
                {"findings": len(records), "input": input_path},
                ensure_ascii=True,
                sort_keys=True,
            )
        )
        return EXIT_OK
    cleaned = strip(text, policy)
    if not output_path:
        raise ManifestError("sanitize strip needs an output path")
    write_text_exact(output_path, cleaned)
    print(
        json.dumps(
            {
                "input": input_path,
                "output": output_path,
                "removed": len(text) - len(cleaned)
                if not policy.map_to_sentinel
                else sum(1 for a, b in zip(text, cleaned) if a != b),
            },
            ensure_ascii=True,
            sort_keys=True,
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragveil",
        description="Invisible-Unicode perturbation attacks on code retrieval, "
        "and the sanitizer that defeats them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--manifest", help="JSON run manifest")
        p.add_argument("--seed", type=int, help="override manifest seed")
        p.add_argument("--out-dir", help="override output directory")
        p.add_argument("--catalog", help="override catalog path")
        p.add_argument("--endpoint", help="remote embedder endpoint override")

    for name in ("attack", "eval", "align", "probe", "ingest"):
        common(sub.add_parser(name))

    sanitize = sub.add_parser("sanitize")
    san_sub = sanitize.add_subparsers(dest="mode", required=True)
    for mode in ("scan", "strip"):
        p = san_sub.add_parser(mode)
        common(p)
        p.add_argument("--input", help="file to examine")
        p.add_argument("--output", help="where to write results")
        p.add_argument(
            "--keep-emoji-joiners", action="store_true", default=None,
            help="retain ZWJ between pictographs",
        )
        p.add_argument(
            "--sentinel", action="store_true", default=None,
            help="replace instead of delete, preserving offsets",
        )
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    overrides: dict = {
        "seed": args.seed,
        "out_dir": args.out_dir,
        "catalog": args.catalog,
    }
    if args.endpoint:
        overrides["embedder"] = {"kind": "remote", "endpoint": args.endpoint}
    if getattr(args, "input", None):
        overrides["input"] = args.input
    if getattr(args, "output", None):
        overrides["output"] = args.output
    if getattr(args, "keep_emoji_joiners", None):
        overrides["preserve_emoji_joiners"] = True
    if getattr(args, "sentinel", None):
        overrides["map_to_sentinel"] = True
    return overrides


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest, digest = load_manifest(args.manifest, _overrides_from_args(args))
        declared = manifest.get("command")
        if declared is not None and declared != args.command:
            raise ManifestError(
                f"manifest declares command {declared!r}, invoked as {args.command!r}"
            )
        ctx = RunContext(manifest, digest)
    except ManifestError as exc:
        _error_record("validation", str(exc))
        return EXIT_VALIDATION

    try:
        if args.command == "attack":
            return cmd_attack(ctx)
        if args.command == "eval":
            return cmd_eval(ctx)
        if args.command == "align":
            return cmd_align(ctx)
        if args.command == "probe":
            return cmd_probe(ctx)
        if args.command == "ingest":
            return cmd_ingest(ctx)
        if args.command == "sanitize":
            return cmd_sanitize(ctx, args.mode)
        raise RagveilError(f"unknown command {args.command!r}")
    except ManifestError as exc:
        _error_record("validation", str(exc))
        return EXIT_VALIDATION
    except InsensitiveEmbedder as exc:
        _error_record("insensitive_embedder", str(exc))
        return EXIT_INSENSITIVE
    except RemoteError as exc:
        _error_record("connectivity", str(exc), attempts=exc.attempts)
        return EXIT_CONNECTIVITY
    except RagveilError as exc:
        _error_record("run_failure", str(exc))
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
