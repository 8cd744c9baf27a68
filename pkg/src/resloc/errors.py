"""Exception hierarchy.

Every error carries a short ``category`` used by the CLI for its
``error[<category>]: ...`` line.
"""


class ReslocError(Exception):
    category = "error"


class DomainError(ReslocError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    category = "domain"


class DataError(ReslocError, ValueError):
    """Input tables are missing entries or hold invalid values."""

    category = "data"


class ContractError(ReslocError, ValueError):
    """Two objects that must agree on a schema do not."""

    category = "contract"


class DegenerateScalingError(ReslocError, ArithmeticError):
    """Accessibility does not respond to travel time, so it cannot be rescaled."""

    category = "scaling"


class SingularDesignError(ReslocError, ArithmeticError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)

    category = "singular"


class IdentificationError(ReslocError, ArithmeticError):
    def __init__(self, message, names=()):
        super().__init__(message)
        self.names = tuple(names)

    category = "identification"


class ConvergenceError(ReslocError, RuntimeError):
    def __init__(self, message, last_iterate=None, gradient=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.gradient = gradient

    category = "convergence"


class InfeasiblePolicyError(ReslocError, ValueError):
    category = "policy"


class EmptySummaryError(ReslocError, ValueError):
    category = "empty"


class ConfigError(ReslocError, ValueError):
    category = "config"
