"""Exception types shared across the toolkit."""


class ReachCertError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(ReachCertError, ValueError):
    """An array does not match the dimension declared by the system."""


class SetMembershipError(ReachCertError, ValueError):
    """A control or disturbance lies outside its admissible set."""


class PolicyError(ReachCertError, RuntimeError):
    """A policy produced a control outside U beyond the clamping tolerance."""


class ConfigError(ReachCertError, ValueError):
    """A configuration document is malformed or inconsistent."""


class BudgetError(ReachCertError, ValueError):
    """A grid or lattice would exceed the configured size budget."""
