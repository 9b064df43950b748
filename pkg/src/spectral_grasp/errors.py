"""Exception hierarchy shared by all stages of the grasp pipeline."""


class GraspError(Exception):
    """Base class for every error raised by this package."""


class ParseError(GraspError, ValueError):
    pass


class EmptyCloud(GraspError, ValueError):
    pass


class NonFiniteValue(GraspError, ValueError):
    pass


class TooFewPoints(GraspError, ValueError):
    pass


class MissingNormals(GraspError, ValueError):
    pass


class DomainError(GraspError, ValueError):
    pass


class DimensionMismatch(GraspError, ValueError):
    pass


class SymmetryViolation(GraspError, ValueError):
    pass


class BandwidthMismatch(GraspError, ValueError):
    pass


class ZeroSignal(GraspError, ValueError):
    pass


class CoincidentContacts(GraspError, ValueError):
    pass


class InsufficientPatch(GraspError, ValueError):
    pass


class ConfigError(GraspError, ValueError):
    """Malformed configuration or gripper file."""
