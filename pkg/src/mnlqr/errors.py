"""Exception hierarchy.

Every error raised on purpose by the library derives from `MnlqrError`.
Errors that describe malformed input also derive from `ValueError`, and
numerical failures derive from `NumericalError` so that callers (the CLI
in particular) can map them to distinct exit codes.
"""


class MnlqrError(Exception):
    """Base class for library errors."""


class InputError(MnlqrError, ValueError):
    """Malformed or inconsistent input."""


class NumericalError(MnlqrError, ArithmeticError):
    """A numerical procedure failed or its preconditions do not hold."""


# shapes and structure
class LengthNotTriangular(InputError):
    """Vector length is not d(d+1)/2 for any integer d."""


class ShapeMismatch(InputError):
    """Array shapes are not conformable."""


class DimensionMismatch(InputError):
    """Model or data dimensions do not agree."""


class InvalidMode(InputError):
    """Tensor mode outside {1, 2, 3}."""


class EmptyModeList(InputError):
    """No modes were supplied."""


class EmptyInput(InputError):
    """An operation received an empty collection."""


class NotSquare(InputError):
    """Operator does not map a space to itself."""


class NotStructured(InputError):
    """Operation needs a structured mode tensor."""


class InvalidDelta(InputError):
    """Confidence level outside (0, 1)."""


class ConfigInvalid(InputError):
    """Experiment configuration is invalid.

    Parameters
    ----------
    path : str
        Dotted path of the offending field.
    message : str
        What is wrong with it.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


# definiteness
class NotPsd(InputError):
    """Matrix is not positive semidefinite within tolerance."""

    def __init__(self, eigmin, what="matrix"):
        self.eigmin = float(eigmin)
        super().__init__(f"{what} is not PSD (smallest eigenvalue {eigmin:.3e})")


class NotPd(InputError):
    """Matrix is not positive definite."""

    def __init__(self, eigmin, what="matrix"):
        self.eigmin = float(eigmin)
        super().__init__(f"{what} is not PD (smallest eigenvalue {eigmin:.3e})")


class WBarNotPsd(NotPsd):
    """Upper end of the ambiguity interval is not PSD."""

    def __init__(self, eigmin):
        super().__init__(eigmin, what="upper moment bound W_hat + beta I")


class NotCpConstructed(MnlqrError, TypeError):
    """Exact operator norm requested for an operator not known to be CP."""


# model and data
class ModelNotEquivalent(InputError):
    """The model tensor cannot represent the true dynamics."""


class NormBoundViolated(InputError):
    """A sample exceeds the declared norm bound."""

    def __init__(self, index, norm, bound):
        self.index = index
        super().__init__(f"sample {index} has norm {norm:.6g} > bound {bound:.6g}")


class InsufficientSamples(InputError):
    """Too few samples for the requested estimator."""


class RankDeficientData(NumericalError):
    """Regressors do not span the required space."""


class SampleCountBelowThreshold(InputError):
    """Sample count is below the validity threshold of a bound."""


class NotObservable(NumericalError):
    """Disturbance cannot be recovered from a transition."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"disturbance not observable at sample {index}")


class InconsistentMeasurement(NumericalError):
    """Transition cannot be explained by any disturbance."""

    def __init__(self, index, residual):
        self.index = index
        self.residual = float(residual)
        super().__init__(f"sample {index} inconsistent with the model (residual {residual:.3e})")


# stability and synthesis
class Unstable(NumericalError):
    """Operator is not mean-square stable."""

    def __init__(self, rho):
        self.rho = float(rho)
        super().__init__(f"spectral radius {rho:.6g} is not below one")


class UnstableClosedLoop(Unstable):
    """Closed loop is not mean-square stable, cost is infinite."""


class SingularInnerMatrix(NumericalError):
    """R + G*(P) is numerically singular."""


class Diverged(NumericalError):
    """Riccati iteration grew without bound."""


class NotConverged(NumericalError):
    """Iteration limit reached before convergence."""


class TrajectoryBlowup(NumericalError):
    """Simulated state exceeded the magnitude cap."""
