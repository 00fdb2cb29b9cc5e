"""Exception hierarchy.

ConfigError subclasses map to CLI exit code 2, NumericalError subclasses to
exit code 3.
"""


class MyelinhomError(Exception):
    pass


class ConfigError(MyelinhomError):
    """Invalid user input: geometry, parameters, or run configuration."""


class NumericalError(MyelinhomError):
    """A solver or discretization failed at runtime."""


# -- geometry -----------------------------------------------------------------

class AngleOutOfRange(ConfigError):
    pass


class DegenerateNode(ConfigError):
    pass


class MyelinCurveInvalid(ConfigError):
    pass


class QuadratureFailure(NumericalError):
    pass


# -- meshing ------------------------------------------------------------------

class MeshGenerationFailure(NumericalError):
    pass


class GeometryTooThin(ConfigError):
    pass


# -- linear algebra -----------------------------------------------------------

class NoJumpSurface(ConfigError):
    pass


class SolverDivergence(NumericalError):
    pass


class IncompatibleRhs(NumericalError):
    pass


# -- eigenproblem and corner analysis ------------------------------------------

class EigenSolverStagnation(NumericalError):
    pass


class SpuriousNegativeEigenvalue(NumericalError):
    pass


class NoBracket(NumericalError):
    pass


class DeltaTooLarge(ConfigError):
    pass


class MeshTooCoarse(ConfigError):
    pass


# -- membrane / time stepping ---------------------------------------------------

class GatingOutOfRange(ConfigError):
    pass


class StepRejected(NumericalError):
    pass
