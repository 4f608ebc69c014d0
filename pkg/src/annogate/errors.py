"""Exception hierarchy shared across the package."""


class AnnogateError(Exception):
    """Base class for all package errors."""


# --- catalog / datasets ---------------------------------------------------


class ParseError(AnnogateError):
    """Input file does not parse as the expected schema."""


class SchemaError(AnnogateError):
    """A record violates the dataset schema."""


class DuplicateIntentId(AnnogateError):
    """Two intents share the same id."""


class MissingDescription(AnnogateError):
    """A non-special intent has an empty description."""


class UnknownIntentId(AnnogateError):
    """Referenced intent id does not resolve in the catalog."""


class TupleArityError(SchemaError):
    """A multi-class record does not carry exactly five candidates."""


# --- classifier -----------------------------------------------------------


class InvalidLabelIndex(AnnogateError):
    """A training label indexes a class outside the model's class list."""


class EmptyDataset(AnnogateError):
    """Operation requires at least one record."""


# --- gateway --------------------------------------------------------------


class TransportError(AnnogateError):
    """Request failed after exhausting retries."""


class EndpointRefused(AnnogateError):
    """Endpoint rejected the request (non-retryable HTTP status)."""


class MalformedResponse(AnnogateError):
    """Endpoint response violates the wire contract."""


class MissingLogprobs(MalformedResponse):
    """Endpoint does not expose token probabilities."""


# --- prompting ------------------------------------------------------------


class TemplateMismatch(AnnogateError):
    """Template id does not match the task kind."""


class ArityError(AnnogateError):
    """Resolved candidate list does not match the task's arity."""


# --- engines --------------------------------------------------------------


class MalformedAnswer(AnnogateError):
    """Generated text carries no parseable answer."""


class OutOfRangeOption(MalformedAnswer):
    """Answer is a number outside the candidate list."""


class NoLegalToken(AnnogateError):
    """None of the legal answer tokens appear in the distribution."""


class OptionSetMismatch(AnnogateError):
    """Ensemble members disagree on the option set."""


class MissingProbs(AnnogateError):
    """Outcome lacks the answer probabilities required here."""


# --- rag ------------------------------------------------------------------


class EmptyIndex(AnnogateError):
    """Search over an index with no entries."""


class DimensionMismatch(AnnogateError):
    """Vector dimension does not match the index."""


class ScorerError(AnnogateError):
    """Reranker scorer failed."""


# --- metrics --------------------------------------------------------------


class EmptyInput(AnnogateError):
    """Metric over an empty collection."""


class EmptyAfterFilter(AnnogateError):
    """No rows remain after policy filtering."""


class DegenerateClass(AnnogateError):
    """A class is absent from the covered references."""


# --- calibration ----------------------------------------------------------


class NoFeasibleThreshold(AnnogateError):
    """No operating point satisfies every baseline floor."""


# --- noise lab ------------------------------------------------------------


class SingleClassDataset(AnnogateError):
    """Nearest-class mapping needs at least two classes."""


class RateOutOfRange(AnnogateError):
    """Corruption rate outside [0, 1]."""


# --- orchestrator ---------------------------------------------------------


class ConfigError(AnnogateError):
    """Job configuration is invalid."""
