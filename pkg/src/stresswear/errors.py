"""Exception hierarchy shared by every pipeline stage."""


class StressWearError(Exception):
    """Base class for all pipeline errors."""


# ingest
class MalformedFile(StressWearError, ValueError):
    pass


class EmptySignal(StressWearError, ValueError):
    pass


class KindMismatch(StressWearError, ValueError):
    pass


class OverlappingSegments(StressWearError, ValueError):
    pass


class NonBaselineStart(StressWearError, ValueError):
    pass


class MissingCardiacSignal(StressWearError, ValueError):
    pass


class EdaNotSupportedForDevice(StressWearError, ValueError):
    pass


# preprocess
class EmptySeries(StressWearError, ValueError):
    pass


class DegenerateSeries(StressWearError, ValueError):
    pass


class DegenerateStats(StressWearError, ValueError):
    pass


class SignalError(StressWearError):
    """A per-signal failure inside :func:`preprocess_session`, tagged with the signal kind."""

    def __init__(self, kind, cause):
        self.kind = kind
        self.cause = cause
        super().__init__(f"{kind.value}: {cause}")


# eda decomposition
class NonUniformSampling(StressWearError, ValueError):
    pass


class SessionTooShort(StressWearError, ValueError):
    pass


class DidNotConverge(StressWearError, RuntimeError):
    pass


class DimensionTooLarge(StressWearError, ValueError):
    pass


# features
class InsufficientSamples(StressWearError, ValueError):
    pass


class NoUsableWindows(StressWearError, ValueError):
    pass


# models
class SingleClassTraining(StressWearError, ValueError):
    pass


class SchemaMismatch(StressWearError, ValueError):
    pass


class CorruptModelFile(StressWearError, ValueError):
    pass


class SchemaVersionMismatch(StressWearError, ValueError):
    pass


# evaluation
class SingleClassLabels(StressWearError, ValueError):
    pass


class TooFewSubjects(StressWearError, ValueError):
    pass


class EmptyInput(StressWearError, ValueError):
    pass


class LeakageError(StressWearError, AssertionError):
    """Raised when a held-out subject's rows reach the training split."""


# synth / cli
class InvalidSpec(StressWearError, ValueError):
    pass


class ConfigError(StressWearError, ValueError):
    pass


class IoError(StressWearError, OSError):
    """A file could not be read or written; the message names the path."""


class PipelineError(StressWearError):
    """A stage failed for one subject and device; ``cause`` holds the original error."""

    def __init__(self, subject_id, device, cause):
        self.subject_id = subject_id
        self.device = device
        self.cause = cause
        dev = getattr(device, "value", device)
        super().__init__(f"subject {subject_id}, device {dev}: {type(cause).__name__}: {cause}")
