class TrapwalkError(Exception):
    """Base class for all package errors."""


class ClusterCapExceeded(TrapwalkError):
    """Cluster exploration visited more sites than ``Params.cluster_cap``."""


class CoordinateRangeError(TrapwalkError):
    """A lattice coordinate left the packable range."""


class HorizonOverflow(TrapwalkError):
    """A holding time or jump time left the representable range."""


class OutOfHorizon(TrapwalkError):
    """A query time or step lies beyond the simulated trajectory."""


class NotApplicable(TrapwalkError):
    """The requested prediction does not exist for these parameters."""


class DegenerateFit(TrapwalkError):
    """A regression window carries no usable data."""


class InsufficientTail(TrapwalkError):
    """Too few populated tail bins to fit a decay rate."""


class ConfigError(TrapwalkError):
    """Invalid or unparseable run configuration."""
