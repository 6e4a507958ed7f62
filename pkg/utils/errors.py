"""
Simulation Errors

Exception hierarchy shared by the engine, the protocol services and the CLI.
Anomalies the execution model tolerates (over-budget queries, forbidden
messages, runaway inner loops, epoch conflicts) are never raised: they are
recorded as trace flags instead.
"""

from typing import Any, Optional


class SimulationError(RuntimeError):
    """Base class for every error raised by the simulator."""


class ConfigurationError(SimulationError, ValueError):
    """Invalid execution parameters or a malformed scenario file."""

    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class TimingRuleViolation(SimulationError):
    """A scenario-supplied delivery breaks the (partially) synchronous bound."""

    def __init__(self, sender: str, receiver: str, message_digest: str, sent_at: int,
                 delivered_at: Optional[int], bound: int):
        self.sender = sender
        self.receiver = receiver
        self.message_digest = message_digest
        self.sent_at = sent_at
        self.delivered_at = delivered_at
        self.bound = bound
        super().__init__(
            f"dissemination ({sender}, {receiver}, {message_digest[:12]}, t={sent_at}) "
            f"delivered at {delivered_at}, receiver ready by {bound}"
        )

    def quadruple(self) -> tuple:
        return (self.sender, self.receiver, self.message_digest, self.sent_at)


class InvalidTransactionSetError(SimulationError, ValueError):
    """A stake query or transfer was made against an invalid transaction set."""


class InsufficientStakeError(InvalidTransactionSetError):
    """A transfer asked for more stake than the source identifier owns."""

    def __init__(self, identifier: str, requested: int, available: int):
        self.identifier = identifier
        self.requested = requested
        self.available = available
        super().__init__(
            f"{identifier} owns {available} stake units, {requested} requested"
        )


class SearchCapExceeded(SimulationError):
    """Exhaustive subset search refused because the candidate set is too large."""

    def __init__(self, size: int, cap: int, what: str = "transactions"):
        self.size = size
        self.cap = cap
        super().__init__(f"refusing exhaustive search over {size} {what} (cap {cap})")


class ScenarioValidationError(SimulationError):
    """A scenario is inconsistent with its declared setting or preconditions."""

    def __init__(self, message: str, detail: Any = None):
        self.detail = detail
        super().__init__(message)
