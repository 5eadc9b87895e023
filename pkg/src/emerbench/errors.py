"""Exception hierarchy. Every engine error derives from ``EmerBenchError``."""


class EmerBenchError(Exception):
    """Base class; ``stage`` is filled in by the orchestrator when known."""

    stage = None


class ValidationError(EmerBenchError, ValueError):
    pass


class ManifestError(ValidationError):
    """Carries the complete list of manifest violations, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  [{v.code}] {v.message}" for v in self.violations)
        super().__init__(f"{len(self.violations)} manifest violation(s):\n{lines}")


class ConfigError(ValidationError):
    pass


# container I/O
class ContainerError(EmerBenchError, ValueError):
    pass


class BadMagic(ContainerError):
    pass


class TruncatedPayload(ContainerError):
    pass


class NonFiniteSample(ContainerError):
    pass


class IoFailure(EmerBenchError, OSError):
    pass


# signal processing
class InvalidBandEdges(ValidationError):
    pass


class SignalTooShort(ValidationError):
    pass


class ChannelMismatch(ValidationError):
    pass


class DegenerateCovariance(EmerBenchError, ArithmeticError):
    pass


class WrongChannelCount(ValidationError):
    pass


class RowCountMismatch(ValidationError):
    pass


class MissingEventAnnotations(ValidationError):
    pass


class NonMonotonicTimestamps(ValidationError):
    pass


# splitting
class TooFewTrials(ValidationError):
    pass


class TooFewSubjects(ValidationError):
    pass


class MissingFeatures(EmerBenchError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


# models
class SingleClassTrainSet(ValidationError):
    pass


class NonFiniteLoss(EmerBenchError, ArithmeticError):
    pass


class RankDeficient(EmerBenchError, ArithmeticError):
    pass


class AdapterError(EmerBenchError):
    def __init__(self, message, stderr_tail=""):
        self.stderr_tail = stderr_tail
        if stderr_tail:
            message = f"{message}\n--- adapter stderr (tail) ---\n{stderr_tail}"
        super().__init__(message)


class ProtocolViolation(AdapterError):
    pass


class AdapterTimeout(AdapterError, TimeoutError):
    pass


class NonZeroExit(AdapterError):
    pass


# metrics
class LengthMismatch(ValidationError):
    pass


class LabelOutOfRange(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass
