"""Exception hierarchy shared by all modules."""


class HypGaussError(Exception):
    """Base class for every error raised by this package."""


class GridConfigError(HypGaussError, ValueError):
    """Invalid grid resolution or harmonic degree request."""


class DegenerateSurfaceError(HypGaussError):
    """A radial surface whose derivatives or denominators are unusable."""


class RecenterError(HypGaussError):
    """The requested center is not interior or the graph property fails."""


class ConvexityLossError(HypGaussError):
    """The radii tensor is not positive definite at some node.

    Carries the flat node index and the offending eigenvalue so that the
    time stepper can reject a trial step instead of crashing.
    """

    def __init__(self, message, node=None, eigenvalue=None):
        super().__init__(message)
        self.node = node
        self.eigenvalue = eigenvalue


class OutOfModelError(HypGaussError):
    """A Klein-model quantity left the open unit ball (s^2 + |grad s|^2 >= 1)."""


class StiffnessError(HypGaussError):
    """Too many consecutive step rejections."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class VolumeCorrectionError(HypGaussError):
    """The scalar volume-correction solve did not converge."""


class ConfigError(HypGaussError, ValueError):
    """Malformed or unknown run configuration."""


class WindowError(HypGaussError, ValueError):
    """A decay-fit window is empty or contains non-positive samples."""
