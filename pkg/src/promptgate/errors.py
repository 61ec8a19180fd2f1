"""Exception types shared across promptgate modules."""


class PromptgateError(Exception):
    """Base class for all promptgate errors."""


# -- policy / catalog ---------------------------------------------------------

class SchemaError(PromptgateError):
    """A document does not conform to its documented schema."""


class DuplicateCode(SchemaError):
    """A category or rule code appears more than once in a catalog."""


class EmptyCatalog(SchemaError):
    """A catalog defines neither categories nor rules."""


# -- detection ----------------------------------------------------------------

class UnsupportedCategory(PromptgateError):
    """A catalog category has no built-in pattern and no custom pattern."""


class SpanMismatch(PromptgateError):
    """An entity span does not reproduce the entity text from the prompt."""


# -- model output parsing -----------------------------------------------------

class MalformedOutput(PromptgateError):
    """The first line of a guard-style answer is neither 'safe' nor 'unsafe'."""


class MissingLines(MalformedOutput):
    """An 'unsafe' answer is missing its category or entity lines."""


# -- remote model client ------------------------------------------------------

class TransportError(PromptgateError):
    """The remote endpoint could not be reached."""


class UpstreamTimeout(TransportError):
    """The remote endpoint did not answer within the configured timeout."""


class UpstreamError(PromptgateError):
    """The remote endpoint answered with a non-success status."""

    def __init__(self, status_code: int, body: str = ""):
        super().__init__(f"upstream returned status {status_code}")
        self.status_code = status_code
        self.body = body


class DetectorUnavailable(PromptgateError):
    """The configured detector could not produce a verdict."""


# -- format-preserving encryption ---------------------------------------------

class FpeError(PromptgateError):
    """Base class for encryption-layer errors."""


class DomainTooSmall(FpeError):
    """radix ** length is below the minimum domain of 1,000,000."""


class LengthOutOfRange(FpeError):
    """Input length exceeds the maximum for the alphabet radix."""


class AlphabetViolation(FpeError):
    """Input contains a symbol outside the configured alphabet."""


class FormatTooShort(FpeError):
    """A class payload is too short to encrypt even after class merging."""


class KeyMaterialError(FpeError):
    """Key material has an invalid length or encoding."""


# -- metrics ------------------------------------------------------------------

class MetricsError(PromptgateError):
    """Base class for evaluation errors."""


class EmptyRun(MetricsError):
    """An evaluation was requested over zero records."""


class NoPositives(MetricsError):
    """AUPRC requested on a run with no positive ground truth."""


class MissingScores(MetricsError):
    """AUPRC requested but one or more records lack an unsafe score."""


class NoEntities(MetricsError):
    """PHR requested on a run whose ground truth contains no entities."""


class MissingSanitizedText(MetricsError):
    """PHR requested but a record with entities lacks sanitized text."""


# -- dataset ------------------------------------------------------------------

class DatasetError(PromptgateError):
    """Base class for dataset validation errors."""


class EntityNotInMessage(DatasetError):
    """A ground-truth entity string does not occur verbatim in its message."""


# -- gateway ------------------------------------------------------------------

class ConfigError(PromptgateError):
    """Gateway configuration is invalid or unreadable."""
