"""Exception types shared across the pipeline.

Every module raises one of these instead of bare ValueError wherever the
failure is part of its contract; plain ValueError is reserved for
precondition violations (caller bugs).
"""


class CreditXaiError(Exception):
    """Base class for all pipeline errors."""


# --- filing ingestion ---

class NoItemsFound(CreditXaiError):
    """No item headers matched: not a 10-K or badly extracted text."""


class AllItemsMissing(CreditXaiError):
    """None of the wanted item ids are present in the parsed document."""


# --- features ---

class ProviderUnavailable(CreditXaiError):
    """Feature provider could not be reached or refused the request."""


class DimensionMismatch(CreditXaiError):
    """A vector's width disagrees with the configured dimensions."""


class CorruptRecord(CreditXaiError):
    """A persisted record failed to parse or validate.

    Carries the 1-based line number of the offending record.
    """

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# --- history ---

class ZeroVector(CreditXaiError):
    """Cosine similarity is undefined for a zero-norm vector."""


class NoCommonItems(CreditXaiError):
    """Two years share no filing items; similarity cannot be aggregated."""


# --- financial quant ---

class UnknownSector(CreditXaiError):
    """The company's sector has no baselines at all."""


class EmptyReport(CreditXaiError):
    """No indicator in the deviation report attained status 'ok'."""


# --- agents ---

class MalformedVerdict(CreditXaiError):
    """Backend response did not contain a valid verdict block.

    Carries the offending response fragment for diagnostics.
    """

    def __init__(self, message: str, fragment: str = ""):
        super().__init__(message)
        self.fragment = fragment


class BackendUnavailable(CreditXaiError):
    """Chat backend unreachable after bounded retries."""


# --- fusion ---

class MissingSignal(CreditXaiError):
    """A required agent signal is absent from the fusion inputs."""

    def __init__(self, agent_id: str):
        super().__init__(f"missing signal from agent {agent_id}")
        self.agent_id = agent_id


# --- reporting / supervision ---

class IoFailure(CreditXaiError):
    """A file write or append failed."""


# --- harness ---

class DegenerateSplit(CreditXaiError):
    """Temporal split produced an empty reference or test side."""


class MissingPrediction(CreditXaiError):
    """A ground-truth key has no prediction."""

    def __init__(self, key):
        super().__init__(f"no prediction for {key}")
        self.key = key
