"""Exception hierarchy shared across the package."""


class TactileExploreError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TactileExploreError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class InvalidParameterError(TactileExploreError, ValueError):
    pass


class NumericError(TactileExploreError, ArithmeticError):
    """Non-finite values in a computation (CLI exit code 3)."""


class ShapeError(TactileExploreError, ValueError):
    pass


class StateError(TactileExploreError, RuntimeError):
    """An operation was called in the wrong lifecycle state."""


class StaleCacheError(StateError):
    """A forward cache was used after the parameters changed."""


class InputContractError(TactileExploreError, ValueError):
    """An image of the wrong view kind was passed (marker present or missing)."""


class DataError(TactileExploreError):
    """Missing or empty training data."""


class BoundsError(TactileExploreError, IndexError):
    pass
