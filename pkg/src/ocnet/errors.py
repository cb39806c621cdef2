"""Exception types shared across the toolkit."""


class OcnetError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(OcnetError):
    """Invalid user-supplied configuration (bad grid spec, bad tolerance, ...)."""


class StructuralError(OcnetError):
    """A tree or edge list violates its structural invariants (cycle, disconnection)."""


class UnsupportedConfigurationError(OcnetError):
    """The requested operation is only defined for a narrower configuration."""


class InsufficientDataError(OcnetError):
    """Not enough samples to perform the requested fit."""


class VerificationError(OcnetError):
    """An internal cross-check (incremental vs. recomputed state) failed."""
