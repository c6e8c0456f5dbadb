"""Exception hierarchy shared across the orchestrator."""


class UrgentFedError(Exception):
    """Base class for all errors raised by this package."""


# --- fleet simulation ---------------------------------------------------

class UnknownMachine(UrgentFedError):
    pass


class MachineDown(UrgentFedError):
    pass


class InfeasibleRequest(UrgentFedError):
    pass


class UnknownJob(UrgentFedError):
    pass


class TimeReversal(UrgentFedError):
    pass


class ConnectionLost(UrgentFedError):
    """A machine connector failed to answer (models network/machine loss)."""


# --- federation ---------------------------------------------------------

class NoHealthyMachines(UrgentFedError):
    pass


class InfeasibleOnMachine(UrgentFedError):
    pass


class InsufficientTokens(UrgentFedError):
    pass


class UnknownRequest(UrgentFedError):
    pass


# --- workflow -----------------------------------------------------------

class DocumentSyntaxError(UrgentFedError):
    """Malformed activity/rule document text."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DocumentSchemaError(UrgentFedError):
    """A document violates the closed schema; names the offending field."""

    def __init__(self, message: str, field: str, line: int | None = None):
        self.field = field
        self.line = line
        loc = f" (field '{field}'" + (f", line {line})" if line is not None else ")")
        super().__init__(message + loc)


class ConditionError(UrgentFedError):
    """A rule condition failed to parse or type-check."""


class MissingField(UrgentFedError):
    """Condition referenced a field absent from the event/state view."""


class BindingError(UrgentFedError):
    """A mandatory activity input could not be bound."""


class UnknownActivity(UrgentFedError):
    pass


# --- ingestion / API ----------------------------------------------------

class UnknownSource(UrgentFedError):
    pass


class PayloadInvalid(UrgentFedError):
    pass


class UnknownIncident(UrgentFedError):
    pass


# --- ensembles ----------------------------------------------------------

class UnknownEnsemble(UrgentFedError):
    pass


class UnknownMember(UrgentFedError):
    pass


class UnknownTarget(UrgentFedError):
    pass


class NotSteerable(UrgentFedError):
    pass


class InvalidSweep(UrgentFedError):
    pass


# --- state store --------------------------------------------------------

class CorruptRecord(UrgentFedError):
    def __init__(self, message: str, last_valid_seq: int):
        self.last_valid_seq = last_valid_seq
        super().__init__(f"{message} (last valid record: seq {last_valid_seq})")
