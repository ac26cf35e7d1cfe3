"""Exception taxonomy shared across the toolkit."""


class RagveilError(Exception):
    """Base class for all toolkit errors."""


class InvalidGene(RagveilError):
    """A gene's position or catalog index is out of range.

    Carries the index of the offending gene in the genome.
    """

    def __init__(self, message: str, gene_index: int):
        super().__init__(f"gene {gene_index}: {message}")
        self.gene_index = gene_index


class ZoneError(RagveilError):
    """The lightweight lexer could not produce safety zones (e.g. an
    unterminated string literal)."""


class EmptyZones(RagveilError):
    """No insertion positions are available inside the given zones."""


class OracleUnavailable(RagveilError):
    """No syntax checker is configured or invocable for the language."""


class EmptyInput(RagveilError):
    """An operation received empty text where non-empty is required."""


class DimError(RagveilError):
    """Vector dimensions do not match."""


class ZeroVector(RagveilError):
    """Cosine similarity is undefined for an all-zero vector."""


class RemoteError(RagveilError):
    """A remote embedding call failed after retries.

    Attributes carry retry metadata for callers that want to back off
    differently.
    """

    def __init__(self, message: str, attempts: int = 1, status: int | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.status = status


class InsensitiveEmbedder(RagveilError):
    """The embedder was probed and does not react to invisible-character
    insertions; attacking it is pointless unless forced."""


class EmptyCorpus(RagveilError):
    """An operation requires a non-empty corpus."""


class DuplicateId(RagveilError):
    """A document id is already present in the corpus."""


class NotFound(RagveilError):
    """A referenced document id is not in the corpus."""


class CompilabilityError(RagveilError):
    """The zone-restricted perturbation could not be made to pass the
    syntax oracle."""


class ManifestError(RagveilError):
    """A run manifest failed validation."""
