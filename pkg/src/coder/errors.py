"""Exception types shared across the toolkit."""


class CoderError(Exception):
    """Base class for all toolkit errors."""


class BundleError(CoderError):
    """Base class for bundle file-format and invariant errors."""


class BadMagicError(BundleError):
    """File does not start with the bundle magic bytes."""


class UnsupportedVersionError(BundleError):
    """Bundle declares a format version this reader does not understand."""


class TruncatedPayloadError(BundleError):
    """File ends before the declared metadata or feature payload."""


class RecordCountMismatchError(BundleError):
    """Metadata record count disagrees with the header row count."""


class InvariantError(BundleError):
    """A bundle or record violates one of its declared invariants."""


class DegenerateFeatureError(BundleError):
    """A feature row has a norm too small to normalize."""

    def __init__(self, row: int, norm: float):
        super().__init__(f"feature row {row} has near-zero norm {norm:.3e}")
        self.row = row
        self.norm = norm


class GatewayError(CoderError):
    """LLM gateway request failed after retries."""


class OfflineCacheMissError(GatewayError):
    """Offline mode forbids network and the prompt is not cached."""


class ResponseParseError(CoderError):
    """An LLM response could not be parsed; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}: {raw[:200]!r}")
        self.raw = raw


class PairStoreMissError(CoderError):
    """A one-to-one pair bundle is missing and cannot be generated."""


class PipelineError(CoderError):
    """Evaluation aborted while processing a specific image."""

    def __init__(self, image_id: int, cause: Exception):
        super().__init__(f"pipeline failed on image {image_id}: {cause}")
        self.image_id = image_id
        self.cause = cause


class ManifestError(CoderError):
    """Run manifest is missing, malformed, or references absent files."""
