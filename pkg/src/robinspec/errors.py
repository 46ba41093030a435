"""Exception hierarchy shared by all modules."""


class RobinSpecError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(RobinSpecError, ValueError):
    """Invalid configuration or violated precondition on user input."""


class PatchTooSmallError(ConfigError):
    """Boundary patch is empty once the margin nodes are removed."""


class SolverError(RobinSpecError):
    """Eigensolver failed to certify its output.

    Attributes
    ----------
    worst_residual : float
        Largest residual among the returned eigenpairs.
    """

    def __init__(self, message, worst_residual=float("nan")):
        super().__init__(message)
        self.worst_residual = worst_residual


class ContourError(RobinSpecError):
    """An eigenvalue lies on (or too close to) a projector contour."""


class BranchLossError(RobinSpecError):
    """The tracked eigenvector left the isolated cluster."""


class MultiplicityError(RobinSpecError):
    """A simple-eigenvalue method was applied to a (near) multiple eigenvalue.

    Attributes
    ----------
    index : int
        1-based eigenvalue index that violated the simplicity requirement.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SearchFailure(RobinSpecError):
    """The randomized simplicity search ran out of trials."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BasisError(RobinSpecError):
    """Perturbation basis cannot support the requested inversion."""


class SplittingError(RobinSpecError):
    """A degenerate cluster did not split along the chosen direction."""


class ConvergenceError(RobinSpecError):
    """Cluster-limit iteration did not reach its Cauchy stopping rule."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class OrderAmbiguityError(RobinSpecError):
    """Vanishing order at a zero of a trace could not be classified."""

    def __init__(self, message, band=None):
        super().__init__(message)
        self.band = band


class MissingQueryError(RobinSpecError):
    """A replay oracle was asked for an impedance it never recorded."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
