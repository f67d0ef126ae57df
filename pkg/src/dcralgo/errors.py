"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class DcrAlgoError(Exception):
    """Base class for all domain errors raised by this package."""


# -- graph semantics -------------------------------------------------------

class GraphError(DcrAlgoError):
    pass


class TooManyEvents(GraphError):
    pass


class DanglingReference(GraphError):
    pass


class DuplicateRelation(GraphError):
    pass


class UnknownEvent(GraphError):
    pass


class NotEnabled(GraphError):
    pass


class NotEnabledAtStep(NotEnabled):
    def __init__(self, step: int, event: int):
        super().__init__(f"event {event} is not enabled at step {step}")
        self.step = step
        self.event = event


# -- packed encoding -------------------------------------------------------

class EncodingError(DcrAlgoError):
    pass


class EventOutOfRange(EncodingError):
    pass


class BadLength(EncodingError):
    pass


class ReservedBitSet(EncodingError):
    pass


class TrailingBitsSet(EncodingError):
    pass


class CapacityExceeded(EncodingError):
    pass


# -- simulated runtime -----------------------------------------------------

class AvmError(DcrAlgoError):
    pass


class InsufficientBalance(AvmError):
    pass


class SchemaTooLarge(AvmError):
    pass


class UnknownApp(AvmError):
    pass


class UnknownAccount(AvmError):
    pass


class StorageAccountsExhausted(AvmError):
    pass


class FeeUnpayable(AvmError):
    pass


class CallTooLarge(AvmError):
    pass


class ProgramError(AvmError):
    """Raised inside a running program; aborts the call.

    ``code`` is the short machine-readable reason reported in the call result.
    """

    code = "ProgramError"

    def __init__(self, message: str = "", code: str | None = None):
        super().__init__(message or (code or self.code))
        if code is not None:
            self.code = code


class Rejected(ProgramError):
    code = "Rejected"


class BudgetExceeded(ProgramError):
    code = "BudgetExceeded"


class KeyValueTooLong(ProgramError):
    code = "KeyValueTooLong"


class SchemaFull(ProgramError):
    code = "SchemaFull"


class MissingKey(ProgramError):
    code = "MissingKey"


# -- cost model ------------------------------------------------------------

class OutOfRange(DcrAlgoError, ValueError):
    pass


# -- front end -------------------------------------------------------------

class ParseError(DcrAlgoError):
    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class DifferentialMismatch(DcrAlgoError):
    pass


class ConstructionError(DcrAlgoError):
    """A construction call was rejected.

    ``step`` numbers transactions in issue order with deployment as step 0,
    so the k-th add_event is step k.
    """

    def __init__(self, step: int, label: str, reason: str | None):
        super().__init__(f"step {step} ({label}) rejected: {reason}")
        self.step = step
        self.label = label
        self.reason = reason
