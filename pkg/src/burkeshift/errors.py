"""Exception types shared across the package."""


class BurkeShiftError(Exception):
    """Base class for all package errors."""


class BadConfig(BurkeShiftError, ValueError):
    """A parameter violates its documented constraint."""


class DegenerateWindow(BurkeShiftError, ValueError):
    """A time window is empty or inverted where a nonempty one is required."""


class CertificationLost(BurkeShiftError):
    """The certified span of a windowed computation became empty."""


class ResourceLimit(BurkeShiftError):
    """An exhaustive enumeration was asked to exceed its resource guard."""


class NoCoalescence(BurkeShiftError):
    """Coupling-from-the-past failed to coalesce within the iteration cap."""


class UnrealizablePair(BurkeShiftError):
    """A consecutive state pair admits no generating map label.

    Raised by the label-recovery step when a family violates the
    reversibility premise it was asserted to satisfy.
    """


class InsufficientData(BurkeShiftError, ValueError):
    """Too few samples or cells to run a statistical test."""
