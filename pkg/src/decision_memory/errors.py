"""Exception hierarchy shared across the package."""


class DecisionMemoryError(Exception):
    """Base class for every error raised by this package."""


class EmptyInput(DecisionMemoryError, ValueError):
    pass


# --- LLM gateway -----------------------------------------------------------


class BackendError(DecisionMemoryError):
    """Any failure to obtain a usable response from an LLM backend."""


class NoFixtureMatch(BackendError):
    pass


class TransportError(BackendError):
    pass


class RateLimited(TransportError):
    pass


class EmptyResponse(BackendError):
    pass


class FormatViolation(DecisionMemoryError, ValueError):
    """A response does not follow the grammar of its prompt kind."""


class DuplicateMember(FormatViolation):
    pass


class NoValidProposal(FormatViolation):
    pass


# --- memory ---------------------------------------------------------------


class UnknownGoalType(DecisionMemoryError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else "unknown goal type"


class SchemaVersionMismatch(DecisionMemoryError):
    pass


class MemoryIoError(DecisionMemoryError, OSError):
    pass


# --- agent / environments -------------------------------------------------


class EmptyAction(BackendError):
    pass


class UnparseableGoal(DecisionMemoryError, ValueError):
    pass


class InvalidAction(DecisionMemoryError):
    """Rejected action; the environment state is left untouched."""

    def __init__(self, action: str, reason: str) -> None:
        super().__init__(reason)
        self.action = action
        self.reason = reason


class StaleHandle(DecisionMemoryError):
    pass


class ConfigError(DecisionMemoryError):
    pass
