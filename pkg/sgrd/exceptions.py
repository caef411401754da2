class SgrdError(Exception):
    """Base exception for the simulator."""
    pass


class DomainError(SgrdError, ValueError):
    """Argument outside the mathematical domain of a formula."""
    pass


class RegimeError(SgrdError):
    """An inequality required by a derived constant does not hold."""
    pass


class ShapeError(SgrdError, ValueError):
    """Coefficient arrays of incompatible sizes."""
    pass


class ConfigError(SgrdError):
    """Invalid experiment configuration, time grid or integration window."""
    pass


class UsageError(SgrdError):
    """Operation called with empty or unusable input."""
    pass


class DegeneratePairError(SgrdError):
    """Two curve points share the same torus coordinate."""
    pass


class BlowUpError(SgrdError):
    """State became non-finite during integration."""

    def __init__(self, t: float, message: str | None = None):
        self.t = t
        super().__init__(message or f"non-finite state at t={t:.6g}")


class ArtifactIOError(SgrdError):
    """Reading or writing run artifacts failed."""
    pass
