"""ragveil: invisible-Unicode perturbation attacks on code-RAG retrieval,
and the sanitization defense that neutralizes them.

The toolkit perturbs queries, corpus targets, or both with invisible code
points to steer embedding-similarity retrieval toward an attacker-chosen
snippet, measures how often that works, and ships the stripping defense
that makes the whole attack class a no-op.
"""

from .attack import (
    AttackOutcome,
    AttackScenario,
    DEConfig,
    FitnessContext,
    attack_both,
    loss_query,
    loss_target,
    optimize,
    select_reference,
)
from .catalog import InvisibleCatalog, default_catalog, load_catalog, strip_catalog_chars
from .embedding import (
    HashedTrigramEmbedder,
    RemoteEmbedder,
    SensitivityReport,
    cosine,
    sensitivity_probe,
)
from .harness import (
    AlignmentPair,
    AlignmentRecord,
    AttackReport,
    DetectionRule,
    EvalConfig,
    Query,
    best_across_budgets,
    detect_target_in_output,
    emit_report,
    run_alignment,
    run_retrievability,
)
from .perturb import Genome, InsertionGene, apply_genome, every_other_position_genome
from .retrieval import (
    Corpus,
    Document,
    RetrievalResult,
    load_corpus_dir,
    load_corpus_jsonl,
    poison,
    rank_of,
    retrieve_k,
)
from .sanitize import SanitizePolicy, defended_retrieve, scan, strip
from .zones import (
    JAVA_LIKE,
    PLAIN_TEXT,
    PYTHON_LIKE,
    SafetyZones,
    compute_safety_zones,
    syntax_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentPair",
    "AlignmentRecord",
    "AttackOutcome",
    "AttackReport",
    "AttackScenario",
    "Corpus",
    "DEConfig",
    "DetectionRule",
    "Document",
    "EvalConfig",
    "FitnessContext",
    "Genome",
    "HashedTrigramEmbedder",
    "InsertionGene",
    "InvisibleCatalog",
    "JAVA_LIKE",
    "PLAIN_TEXT",
    "PYTHON_LIKE",
    "Query",
    "RemoteEmbedder",
    "RetrievalResult",
    "SafetyZones",
    "SanitizePolicy",
    "SensitivityReport",
    "apply_genome",
    "attack_both",
    "best_across_budgets",
    "compute_safety_zones",
    "cosine",
    "default_catalog",
    "defended_retrieve",
    "detect_target_in_output",
    "emit_report",
    "every_other_position_genome",
    "load_catalog",
    "load_corpus_dir",
    "load_corpus_jsonl",
    "loss_query",
    "loss_target",
    "optimize",
    "poison",
    "rank_of",
    "retrieve_k",
    "run_alignment",
    "run_retrievability",
    "scan",
    "select_reference",
    "sensitivity_probe",
    "strip",
    "strip_catalog_chars",
    "syntax_oracle",
]
