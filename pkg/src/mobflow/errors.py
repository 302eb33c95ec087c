"""Exception types shared across the package."""


class MobflowError(Exception):
    """Base class for all package errors."""


class ParameterError(MobflowError, ValueError):
    """A numeric or structural parameter violates its precondition."""


class InputError(MobflowError, ValueError):
    """Input data (files, geometries, indices) is unusable."""


class UnboundedMarginError(ParameterError):
    """The travel-energy CDF never reaches the requested quantile."""


class DegenerateNormalizationError(ParameterError):
    """Survival-function normalization collapses (total mass equals average mass)."""


class ConfigValidationError(MobflowError, ValueError):
    """Scenario configuration failed validation.

    Carries the full list of problems, not just the first one found.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
