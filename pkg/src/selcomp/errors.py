"""Exception hierarchy shared by all solver stages."""


class SelcompError(Exception):
    """Base class for every error raised by the package."""


class DomainError(SelcompError, ValueError):
    """Path parameter outside the domain of the desired deformation function."""


class DegenerateTangentError(SelcompError, ValueError):
    """Derivative of the desired deformation function vanishes."""


class ResolutionError(SelcompError, ValueError):
    """A boundary or active-DoF location cannot be snapped to the grid."""


class ElementGeometryError(SelcompError, ValueError):
    """Reference element with a non-positive Jacobian."""


class IncompressibleLimitError(SelcompError, ValueError):
    """Poisson's ratio at or beyond 0.5."""


class InvertedStateError(SelcompError, ArithmeticError):
    """Deformation gradient with non-positive determinant."""


class EquilibriumError(SelcompError, RuntimeError):
    """Newton-Raphson failed even after the maximal number of subdivisions.

    Attributes
    ----------
    fraction : float
        Last load fraction that converged (0 if none).
    """

    def __init__(self, message, fraction=0.0):
        super().__init__(message)
        self.fraction = fraction


class CondensationError(SelcompError, ArithmeticError):
    """Passive block of the tangent matrix is singular."""


class DegenerateBaseError(SelcompError, ArithmeticError):
    """Constraint matrix of the orthonormal-base recursion lost rank."""


class WeightError(SelcompError, ArithmeticError):
    """Non-positive quadratic form where a weighting factor is required."""


class InfeasibleProblemError(SelcompError, RuntimeError):
    """The linear subproblem has no feasible point."""


class ProblemFileError(SelcompError, ValueError):
    """Schema or physical-invariant violation in a problem file."""
