"""Typed failures raised across the package.

Every error derives from :class:`ExSteklovError` and carries a ``kind``
attribute that the command line uses to pick an exit code.
"""


class ExSteklovError(Exception):
    """Base class for all package errors."""

    kind = "numerical"


# -- input / mesh validation ------------------------------------------------

class ParseError(ExSteklovError):
    kind = "input"


class NonManifoldError(ExSteklovError):
    kind = "input"


class OrientationError(ExSteklovError):
    kind = "input"


class DegenerateFaceError(ExSteklovError):
    kind = "input"


# -- hypothesis gates ---------------------------------------------------------

class StarShapeRequired(ExSteklovError):
    kind = "gate"


class NonPositiveCoefficient(ExSteklovError):
    kind = "gate"


class WillmoreBelowThreshold(ExSteklovError):
    kind = "gate"


# -- numerics -----------------------------------------------------------------

class QuadratureFailure(ExSteklovError):
    pass


class SolveFailure(ExSteklovError):
    pass


class ComplexEigenvalueError(ExSteklovError):
    pass


class TooCloseToSurface(ExSteklovError):
    pass


class SideMismatch(ExSteklovError):
    pass


class ExtrapolationUnstable(ExSteklovError):
    pass


class PsiBarOutOfRange(ExSteklovError):
    pass


class RayMissError(ExSteklovError):
    pass


class CurvatureCollapse(ExSteklovError):
    pass


class StepRejected(ExSteklovError):
    pass
