"""Exception hierarchy shared by all modules.

Every error raised on purpose by the library derives from
:class:`QnmLabError`, so callers (and the CLI) can separate numerical
failures from programming mistakes with a single ``except`` clause.
"""


class QnmLabError(Exception):
    """Base class of all library errors."""


class ConfigError(QnmLabError):
    """Malformed or unknown configuration input."""


class EvaluationAtMaterialPole(QnmLabError, ZeroDivisionError):
    """A material law was evaluated at (or numerically on top of) a pole."""


class Overflow(QnmLabError, OverflowError):
    """A special function value is not representable in binary64."""


class RegularizationAngleTooSmall(QnmLabError):
    """The complex stretch angle does not reveal the requested mode."""


class TailNotConverged(QnmLabError):
    """The complex-path tail is too large compared to the integral."""


class SourceOnNodalPoint(QnmLabError):
    """The source hardly overlaps the mode, so the projection is ill-posed."""


class NoConvergence(QnmLabError):
    """An iterative root search did not converge."""


class RootAtMaterialPole(QnmLabError):
    """A resonance root collided with a pole of the permittivity."""


class InvalidBackground(QnmLabError):
    """The surrounding medium is not uniform and non-dispersive."""


class GridTooCoarse(QnmLabError):
    """The discretisation does not resolve the structure."""


class GridMismatch(QnmLabError):
    """Two spectra to be compared were computed on different grids."""


class DefectiveMatrix(QnmLabError):
    """An eigenvalue cluster lacks a full set of eigenvectors."""


class SingularAtEigenvalue(QnmLabError):
    """A direct solve was requested exactly at an eigenvalue."""


class OutsideCompletenessRegion(UserWarning):
    """Warning: a modal expansion is evaluated where it need not converge."""
