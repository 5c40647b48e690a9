"""Exception hierarchy shared by every module."""


class DualiscopeError(ValueError):
    """Base class for all library errors."""


class InvalidMove(DualiscopeError):
    pass


class InvalidConfig(DualiscopeError):
    pass


class InvalidSpec(DualiscopeError):
    pass


class InvalidDual(DualiscopeError):
    pass


class InvalidParameter(DualiscopeError):
    pass


class InvalidPairing(DualiscopeError):
    pass


class PreconditionError(DualiscopeError):
    """An assumption of the check does not hold for the given input."""


class ResourceLimit(DualiscopeError):
    """State space or occupancy guard exceeded."""
