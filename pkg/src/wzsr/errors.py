"""Exception types shared across the package."""


class WzsrError(Exception):
    """Base class for all library errors."""


class ShapeError(WzsrError, ValueError):
    """Array shapes incompatible with the requested operation."""


class DomainError(WzsrError, ValueError):
    """Scalar argument outside its mathematical domain."""


class ContractError(WzsrError, ValueError):
    """Caller violated an operation precondition."""


class NumericError(WzsrError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class AccuracyError(WzsrError, RuntimeError):
    """A numerical routine could not meet its accuracy target."""


class ConfigError(WzsrError, ValueError):
    """Invalid or unknown configuration content."""


class CheckpointError(WzsrError, ValueError):
    """Malformed checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version not supported by this build."""


class TrainingDiverged(WzsrError, RuntimeError):
    """Training hit non-finite numbers.

    Carries enough state to persist the last consistent parameters.
    """

    def __init__(self, message, *, epoch, model=None, log_rows=None):
        super().__init__(message)
        self.epoch = epoch
        self.model = model
        self.log_rows = log_rows or []
