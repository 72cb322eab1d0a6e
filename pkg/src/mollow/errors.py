"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class MollowError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(MollowError):
    """Invalid configuration file or command-line usage."""

    exit_code = 2


class ParameterError(MollowError):
    """Physically or numerically inadmissible parameter value."""

    exit_code = 3


class RegimeError(MollowError):
    """Parameters outside the regime where the requested quantity exists
    (e.g. no triplet splitting without a strong enough drive)."""

    exit_code = 3


class ModelError(MollowError):
    """Inconsistent model input (non-Hermitian Hamiltonian, negative rate)."""

    exit_code = 3


class LayoutError(MollowError):
    """Tensor-slot index or dimension mismatch."""

    exit_code = 3


class CapacityError(MollowError):
    """Composite Hilbert space exceeds the configured size cap."""

    exit_code = 3


class DegeneracyError(MollowError):
    """More than one steady state detected."""

    exit_code = 3


class SolverError(MollowError):
    """Linear solver or integrator did not reach its tolerance."""

    exit_code = 4


class ConvergenceError(MollowError):
    """Coupling-strength convergence check failed; both values attached."""

    exit_code = 4

    def __init__(self, message, value=None, value_half=None):
        super().__init__(message)
        self.value = value
        self.value_half = value_half


class PrecisionError(MollowError):
    """A required moment fell below the numerical noise floor."""

    exit_code = 4


class PropagationError(MollowError):
    """Time propagation failed to meet its tolerance."""

    exit_code = 4


class OracleError(MollowError):
    """Independent spectrum oracle could not be evaluated reliably."""

    exit_code = 4


class FeasibilityError(MollowError):
    """No filter assignment satisfies the requested exclusion margin."""

    def __init__(self, message, best_margin=None):
        super().__init__(message)
        self.best_margin = best_margin

    exit_code = 3


class IntegrityError(MollowError):
    """Corrupt or mismatched checkpoint file."""

    exit_code = 5

    def __init__(self, message, record_index=None):
        super().__init__(message)
        self.record_index = record_index
