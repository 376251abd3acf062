"""Exception hierarchy shared by every flownav module."""

from __future__ import annotations


class FlowNavError(Exception):
    """Base class for all flownav errors."""


class NoIntersection(FlowNavError, ValueError):
    """A camera ray misses the modelled or simulated surface."""


class NonPositiveDepth(FlowNavError, ValueError):
    """The depth model yields an inverse depth <= 0 for a ray."""


class DomainError(FlowNavError, ValueError):
    """Model parameters fall outside their valid domain."""


class InsufficientFeatures(FlowNavError):
    """Too few usable flow observations to constrain the unknowns."""


class RankDeficient(FlowNavError):
    """The stacked motion-field system does not have full column rank."""


class ZeroTruthVelocity(FlowNavError, ZeroDivisionError):
    """Relative error requested against a zero ground-truth velocity."""


class NoFeatures(FlowNavError):
    """Feature detection found nothing trackable."""


class ImageTooSmall(FlowNavError, ValueError):
    """Image cannot support the requested number of pyramid levels."""


class InvalidScenario(FlowNavError, ValueError):
    """Scenario or trajectory configuration is inconsistent."""
