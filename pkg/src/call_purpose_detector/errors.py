"""
Exception hierarchy for the Purpose-of-Call detector.

All errors raised on purpose by this package derive from CallPurposeError so
callers (the CLI, the streaming service) can tell data problems apart from
programming errors.
"""

from typing import Optional


class CallPurposeError(Exception):
    """Base class for all package errors."""


class TranscriptParseError(CallPurposeError):
    """A transcript line could not be decoded."""

    def __init__(self, message: str, line: int = 0):
        self.message = message
        self.line = line
        super().__init__(f"Parse error at line {line}: {message}")


class TranscriptValidationError(CallPurposeError):
    """A decoded transcript violates an utterance invariant."""

    def __init__(self, message: str, line: int = 0):
        self.message = message
        self.line = line
        super().__init__(f"Validation error at line {line}: {message}")


class RuleLoadError(CallPurposeError):
    """A rules file is malformed or holds an expression that does not compile."""

    def __init__(
        self, message: str, rule_id: str = "", expression: Optional[str] = None
    ):
        self.message = message
        self.rule_id = rule_id
        self.expression = expression
        where = f"rule '{rule_id}'" if rule_id else "rules file"
        if expression is not None:
            where += f", expression {expression!r}"
        super().__init__(f"Rule error in {where}: {message}")


class ConfigurationError(CallPurposeError):
    """Invalid configuration or mismatched model dimensions."""


class SessionStateError(CallPurposeError):
    """An operation was attempted on a session in the wrong state."""


class TrainingError(CallPurposeError):
    """The training set cannot produce a scorer."""


class DivergenceError(TrainingError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"Training diverged at step {step} (loss={loss})")


class ModelFormatError(CallPurposeError):
    """A model file has the wrong magic, version or layout."""


class StratumDeficitError(CallPurposeError):
    """Not enough rows in one stratum to satisfy a sampling request."""

    def __init__(self, stratum: str, needed: int, available: int):
        self.stratum = stratum
        self.needed = needed
        self.available = available
        super().__init__(
            f"Stratum '{stratum}' needs {needed} rows but only {available} "
            f"are available"
        )


class EvaluationError(CallPurposeError):
    """Evaluation inputs are inconsistent or empty."""


class GenerationError(CallPurposeError):
    """A GenSpec cannot be generated."""
