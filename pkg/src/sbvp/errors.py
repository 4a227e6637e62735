"""Exception types raised across the package."""


class SbvpError(Exception):
    """Base class for all package errors."""


class InvalidProblem(SbvpError, ValueError):
    """Problem data violates a structural requirement (e.g. target not inside B1)."""


class NonConcave(SbvpError):
    """A defining function is not uniformly concave on its domain."""


class DegenerateGradient(SbvpError):
    """A defining function has (near) vanishing gradient on the boundary."""


class NotSpacelike(SbvpError):
    """A gradient left the spacelike region |Du| < 1 - margin."""


class NotSpacelikeDual(NotSpacelike):
    """A dual sample point y = Du(x) left the unit ball."""


class NonFinite(SbvpError):
    """Overflow or NaN while evaluating geometric quantities."""


class NotConvex(SbvpError):
    """A discrete Hessian failed the convexity margin."""


class BadResolution(SbvpError, ValueError):
    """Requested grid resolution is below the supported minimum."""


class NewtonDiverged(SbvpError):
    """Newton iteration hit its iteration cap or the line search underflowed."""


class LinearSolveFailed(SbvpError):
    """The augmented Newton system could not be factorized."""

    def __init__(self, message, smallest_pivot=None):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


class NoAdmissibleSeed(SbvpError):
    """The affine seed does not map the source domain into the target."""


class ContinuationStalled(SbvpError):
    """The homotopy step in t fell below its minimum."""

    def __init__(self, message, last_state=None, trace=None):
        super().__init__(message)
        self.last_state = last_state
        self.trace = trace


class NoRoot(SbvpError):
    """Bisection bracket did not enclose a root."""


class SpacelikeViolation(SbvpError):
    """Radial flux inversion left the admissible range."""


class ObliquenessFailure(SbvpError):
    """The boundary operator is not oblique at some boundary node."""


class ConfigError(SbvpError, ValueError):
    """Malformed or inadmissible run configuration."""


class IoError(SbvpError, OSError):
    """Unreadable or malformed input/output file."""
