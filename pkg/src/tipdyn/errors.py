"""Exception hierarchy for tipdyn."""


class TipdynError(Exception):
    """Base class for all tipdyn errors."""


class NonPositiveRate(TipdynError):
    """A rate parameter (arrival, connection or impatience) is not > 0."""


class CapacityTooSmall(TipdynError):
    """Boundary-tip capacity below 2; internal tips could never depart."""


class IndexOutOfRange(TipdynError):
    """State coordinates outside the chain's state space."""


class SingularBlock(TipdynError):
    """A U-block in the backward recursion is numerically singular."""


class SingularSystem(TipdynError):
    """The truncated linear system is singular (reducible chain)."""


class NoConvergence(TipdynError):
    """Adaptive truncation exceeded the level ceiling."""


class DivergentMean(TipdynError):
    """Expected absorption times failed to stabilize."""


class GridError(TipdynError):
    """Time grid is unsorted or contains negative entries."""
