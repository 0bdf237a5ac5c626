"""Exception types shared across the engine."""


class BeneError(Exception):
    """Base class for all engine errors."""


# --- request validation ---------------------------------------------------

class ValidationError(BeneError):
    pass


class LeadTimeTooShort(ValidationError):
    pass


class EmptyWindow(ValidationError):
    pass


class ZeroCount(ValidationError):
    pass


class MalformedSlo(ValidationError):
    pass


class InvalidRecurrence(ValidationError):
    pass


class HorizonBeforeStart(ValidationError):
    pass


# --- timeline -------------------------------------------------------------

class WindowOutsideHorizon(BeneError):
    pass


class OverCommit(BeneError):
    pass


class UnknownAllocation(BeneError):
    pass


class UnknownMachine(BeneError):
    pass


# --- scheduler ------------------------------------------------------------

class NonMonotonicTick(BeneError):
    pass


class InsufficientVictims(BeneError):
    pass


# --- pricing --------------------------------------------------------------

class UtilizationOutOfRange(BeneError):
    pass


class NonTerminalState(BeneError):
    pass


# --- storage / config -----------------------------------------------------

class StorageFailure(BeneError):
    pass


class InvalidConfig(BeneError):
    pass


class EncodingError(BeneError):
    pass
