"""Exception hierarchy shared by the library and the CLI."""


class NonholoError(Exception):
    """Base class for every error raised by this package."""


class OutOfChart(NonholoError):
    """A chart point (or a finite-difference stencil point) left the chart domain."""


class DegenerateFrame(NonholoError):
    """The frame together with the complement W does not span the tangent space."""


class NotOrbitTangent(NonholoError):
    """The skew criterion was requested for a generator not declared tangent to orbits."""


class InconsistentGenerators(NonholoError):
    """Bracket coefficients of a would-be gauge generator are not skew."""


class ChartExit(NonholoError):
    """Integration reached the chart boundary.

    ``state`` is the last valid flat state and ``time`` its time; ``trajectory``
    holds whatever was sampled before the exit.
    """

    def __init__(self, message, time=None, state=None, trajectory=None):
        super().__init__(message)
        self.time = time
        self.state = state
        self.trajectory = trajectory


class StepUnderflow(NonholoError):
    """Adaptive step size fell below the allowed minimum."""


class ShapeSingularity(NonholoError):
    """A profile quantity does not have the finite limit required at a pole."""


class FloquetViolation(NonholoError):
    """Gauge ODE solutions failed the evenness / periodicity checks."""


class AdaptedBasisDegenerate(NonholoError):
    """The adapted frame degenerates where the generator coefficient k vanishes."""

    def __init__(self, message, thetas=()):
        super().__init__(message)
        self.thetas = tuple(thetas)


class DegenerateDenominator(NonholoError):
    """A reduced-bracket denominator is numerically zero."""


class PoleRegularizationFailure(NonholoError):
    """The regularized pole limit of a reduced bracket is not finite."""


class ConfigError(NonholoError):
    """The CLI configuration could not be parsed or validated."""
