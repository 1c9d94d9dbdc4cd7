"""Exception taxonomy shared across the package.

Every error carries a short machine-readable ``code`` used by the CLI to
emit structured error objects, plus an ``exit_status`` consumed by the
command entry points (1 usage/config, 2 provider, 3 verification).
"""


class SmartSelectError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"
    exit_status = 1


class DegenerateEmbedding(SmartSelectError):
    """An embedding has zero norm and cannot be normalized or compared."""

    code = "degenerate_embedding"


class DimensionMismatch(SmartSelectError):
    """Operands disagree on dimensionality or shape."""

    code = "dimension_mismatch"


class InvalidProbability(SmartSelectError):
    """A probability lies outside the closed unit interval."""

    code = "invalid_probability"


class InvalidHyperparameter(SmartSelectError):
    """A tuning parameter is outside its documented domain."""

    code = "invalid_hyperparameter"


class AsymmetryError(SmartSelectError):
    """A matrix required to be symmetric is not, beyond tolerance."""

    code = "asymmetric_matrix"


class NumericalError(SmartSelectError):
    """A computation produced NaN, infinity, or an otherwise unusable value."""

    code = "numerical_error"


class SingularSubmatrix(SmartSelectError):
    """A principal submatrix is numerically singular.

    Selection-side callers treat the associated log-determinant as -inf
    instead of letting this propagate; query-side callers surface it after
    jitter rescue fails.
    """

    code = "singular_submatrix"


class EmptyPool(SmartSelectError):
    """No candidates remain after filtering; selection is impossible."""

    code = "empty_pool"


class BudgetExceeded(SmartSelectError):
    """A guarded operation would exceed its configured work budget."""

    code = "budget_exceeded"


class ProviderUnavailable(SmartSelectError):
    """A remote provider could not be reached after retries."""

    code = "provider_unavailable"
    exit_status = 2


class ProtocolViolation(SmartSelectError):
    """A provider answered with a malformed or contract-breaking payload."""

    code = "protocol_violation"
    exit_status = 2


class InvalidTask(SmartSelectError):
    """A task record failed validation; ``field`` names the offending path."""

    code = "invalid_task"

    def __init__(self, message: str, field: str | None = None) -> None:
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
