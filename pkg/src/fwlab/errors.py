"""Exception types shared across the package."""


class FwlabError(Exception):
    """Base class for all package errors."""


class ConfigError(FwlabError):
    """Malformed configuration file or unknown key."""


class ResolutionError(FwlabError):
    """A field no longer resolves the scales the operation needs."""


class BlowupError(FwlabError):
    """Field values exceeded the overflow guard."""


class PinFailureError(FwlabError):
    """Constraint re-pinning Newton iteration did not converge."""


class DegenerateProfileError(FwlabError):
    """Third derivative at the origin too small; modulation system ill-posed."""


class StaleModulationError(FwlabError):
    """Modulation rates were computed at a different rescaled time."""


class DomainError(FwlabError):
    """Argument outside the mathematical domain of the operation."""


class OutOfGridError(FwlabError):
    """A trajectory or evaluation point left the computational grid."""


class InsufficientDataError(FwlabError):
    """Not enough samples (or dynamic range) for a requested fit."""


class InfeasibleDataError(FwlabError):
    """Requested admissibility parameters cannot be certified."""
