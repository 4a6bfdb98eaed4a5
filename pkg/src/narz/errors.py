"""Exception types shared across the package."""


class NarzError(Exception):
    """Base class for errors raised by this package."""


class UnknownFamily(NarzError):
    """Requested kernel family name is not one of the built-ins."""


class NonpositiveSupport(NarzError):
    """Kernel support parameter must be a positive radius."""


class QuadratureFailure(NarzError):
    """Adaptive quadrature did not reach the requested tolerance."""


class NonAdjacentMerge(NarzError):
    """Attempted to merge particles that are not index-contiguous."""


class StepSizeUnderflow(NarzError):
    """Event localization stalled: collisions keep firing within the
    time-localization tolerance without net progress."""


class GridMismatch(NarzError):
    """Mass grid of one object does not match the mass grid of another
    (flux breakpoints vs cumulative masses, plateau values vs flux nodes)."""


class BadMassRule(NarzError):
    """Custom particle masses must be positive and sum to one."""


class InsufficientSnapshots(NarzError):
    """Trajectory snapshots are too sparse for the requested time-quadrature
    accuracy."""


class ScenarioError(NarzError):
    """Scenario configuration failed to parse or validate.  The message
    names the offending key."""


class ParseError(ScenarioError):
    """Scenario file is not syntactically valid."""


class ValidationError(ScenarioError):
    """Scenario file parsed but a field value is inadmissible."""
