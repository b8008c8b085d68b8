"""Exception taxonomy; the CLI maps these onto distinct exit codes."""


class HaloStabError(Exception):
    """Base class for pipeline failures."""


class ConfigError(HaloStabError):
    """Bad configuration value or unparseable config input."""


class SingularPrimaryError(HaloStabError):
    """A trajectory came closer to a primary than the distance floor."""


class EnergySurfaceError(HaloStabError):
    """The energy constraint has no real solution at the requested point."""


class NewtonError(HaloStabError):
    """Fixed-point refinement failed to converge."""


class TransversalityError(HaloStabError):
    """Section crossing missing or tangential."""


class SpectrumError(HaloStabError):
    """Linear part is not elliptic (or is too close to degenerate)."""


class NormalFormError(HaloStabError):
    """Normalization step failed (hard small-divisor floor, reality loss)."""


class ThresholdError(HaloStabError):
    """A stability-estimate precondition (radius threshold) is violated."""
