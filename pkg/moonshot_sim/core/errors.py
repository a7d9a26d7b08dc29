# moonshot_sim/core/errors.py

"""
Exception hierarchy for moonshot-sim.

Protocol handlers never raise on bad network input; these exceptions cover
programming errors, invalid configuration, and trace integrity problems.
Safety violations are reported as data, not raised.
"""


class MoonshotError(Exception):
    """Base class for all moonshot-sim errors."""


class ConfigError(MoonshotError):
    """Raised when a configuration file or override is invalid."""


class MalformedBlock(MoonshotError):
    """Raised when a block violates the height/view constraints of its parent."""


class UnknownBlock(MoonshotError):
    """Raised when an ancestry query names a block the tree does not hold."""


class TraceFormatError(MoonshotError):
    """Raised when a trace or script file cannot be parsed."""


class TraceMismatch(MoonshotError):
    """Raised when a replayed step diverges from what the trace recorded."""

    def __init__(self, step: int, expected: str, actual: str):
        self.step = step
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"Trace mismatch at step {step}: recorded {expected} but replay produced {actual}"
        )


class ForgeryAttempt(MoonshotError):
    """Raised when the adversary tries to inject a message under an honest id."""


class ExplorationBudgetExceeded(MoonshotError):
    """Raised inside the explorer when the state budget runs out."""
