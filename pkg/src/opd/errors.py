"""Exception types shared across the engines."""


class OpdError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(OpdError):
    """A vector does not match the instance dimension."""


class NotHomogeneous(OpdError):
    """Operation requires a homogeneous polynomial."""


class LeadTermMissing(OpdError):
    """A homogeneous polynomial lacks a pure power for a used variable.

    Carries the offending variable indices in ``missing``.
    """

    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"missing pure max-degree terms for variables {self.missing}")


class Unbounded(OpdError):
    """The packing/auction objective can grow without bound."""


class StallError(OpdError):
    """No constrained coordinate of the primal vector can increase."""


class StepLimitExceeded(OpdError):
    """The round integrator hit its step budget before the constraint was met."""


class DegenerateParams(OpdError):
    """Parameter resolution produced a degenerate value (e.g. growth factor 0)."""


class OracleDisagreement(OpdError):
    """Independent offline optimum methods disagree beyond tolerance."""

    def __init__(self, value_a, value_b, message=""):
        self.value_a = value_a
        self.value_b = value_b
        super().__init__(message or f"oracle methods disagree: {value_a} vs {value_b}")


class InvariantViolation(OpdError):
    """A runtime invariant check failed."""
