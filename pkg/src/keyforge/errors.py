"""Exception hierarchy shared by all keyforge modules."""


class KeyforgeError(Exception):
    """Base class for all toolkit errors."""


class TooShort(KeyforgeError):
    """Sequence has fewer elements than the operation requires."""


class AllTrimmed(KeyforgeError):
    """No inter-keystroke intervals survived preprocessing."""


class ParseError(KeyforgeError):
    """Corpus line could not be parsed."""

    def __init__(self, line: int, reason: str = ""):
        self.line = line
        msg = f"corpus parse error at line {line}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class SchemaError(KeyforgeError):
    """Corpus record is structurally invalid."""

    def __init__(self, field: str, line: int | None = None, reason: str = ""):
        self.field = field
        self.line = line
        msg = f"schema error in field {field!r}"
        if line is not None:
            msg += f" at line {line}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class ZeroMean(KeyforgeError):
    """Mean is zero where a ratio requires it to be positive."""


class ZeroVariance(KeyforgeError):
    """Variance is zero where a standardized moment requires spread."""


class InvalidSpec(KeyforgeError):
    """Generator spec is inconsistent with the requested operation."""


class EmptyCorpus(KeyforgeError):
    """Operation requires at least one session."""


class NonFiniteLoss(KeyforgeError):
    """Training loss became NaN or infinite."""

    def __init__(self, epoch: int, step: int, value: float):
        self.epoch = epoch
        self.step = step
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, step {step}")


class InsufficientData(KeyforgeError):
    """Not enough observations to fit the requested model."""


class UntrainedModel(KeyforgeError):
    """Model must be trained before sampling or evaluation."""


class EmptySample(KeyforgeError):
    """Statistical operation received an empty sample."""


class SingleClass(KeyforgeError):
    """Classifier training requires at least two classes."""


class ZeroPooledVariance(KeyforgeError):
    """Pooled variance is zero; effect size undefined."""


class InvalidCounts(KeyforgeError):
    """Binomial counts violate 0 <= k <= n, n >= 1."""


class OutOfRange(KeyforgeError):
    """Argument outside its documented domain."""
