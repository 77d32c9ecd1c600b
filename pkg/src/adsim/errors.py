"""Exception hierarchy shared across the package."""


class AdsimError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AdsimError):
    """A profile, modality, or scenario was built with missing/invalid parameters."""


class PreconditionError(AdsimError):
    """An operation was called with inputs that violate its documented preconditions."""


class ContractViolation(AdsimError):
    """An internal contract was broken (harness bug, not a user error)."""


class AuditIOError(AdsimError):
    """Reading or writing an audit log failed."""

    def __init__(self, message: str, sequence_number: int | None = None):
        super().__init__(message)
        self.sequence_number = sequence_number
