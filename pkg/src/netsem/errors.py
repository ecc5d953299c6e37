"""Exception hierarchy.

User-input problems (bad files, bad model declarations) derive from
``UsageError``; numerical failures during estimation derive from
``NumericalError``.  The CLI maps these onto exit codes 2 and 3.
"""


class NetsemError(Exception):
    """Base class for all package errors."""


class UsageError(NetsemError):
    """Invalid user input: files, flags, or model declarations."""


class NumericalError(NetsemError):
    """Estimation failed at a numerical level."""


class InvalidModel(UsageError):
    """Model specification violates a structural invariant."""


class MalformedFile(UsageError):
    """A model, report, or data file could not be parsed."""


class NonSymmetric(MalformedFile):
    """A matrix that must be symmetric is not."""


class MissingN(MalformedFile):
    """Covariance-matrix input given without a sample size."""


class MissingValues(MalformedFile):
    """Raw data contains missing cells; complete data is required."""


class NoNetworkInReport(UsageError):
    """Report holds no network estimate to export."""


class NotPositiveDefinite(NumericalError):
    """A matrix required to be positive definite is not."""


class SingularStructuralMatrix(NumericalError):
    """(I - B) or (I - Omega) is numerically singular (cond > 1e12)."""


class StartInadmissible(NumericalError):
    """No admissible starting point found after jitter retries."""


class NonConvergence(NumericalError):
    """Optimizer stopped without meeting the gradient tolerance."""


class NotNested(NumericalError):
    """Likelihood-ratio comparison of models that are not nested."""


class DegenerateBaseline(NumericalError):
    """Independence baseline cannot be fit (degenerate sample matrix)."""


class EmptyModelSpace(UsageError):
    """Search target has no free-able entries."""


class AllPathsFailed(NumericalError):
    """Every tuning-parameter value on a LASSO path failed to fit."""
