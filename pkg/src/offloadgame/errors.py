"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A scenario configuration violates a type invariant."""


class NonPositiveParameter(ConfigError):
    def __init__(self, field: str, value):
        self.field = field
        self.value = value
        super().__init__(f"{field} must be positive, got {value!r}")


class NegativeParameter(ConfigError):
    def __init__(self, field: str, value):
        self.field = field
        self.value = value
        super().__init__(f"{field} must be nonnegative, got {value!r}")


class DimensionMismatch(ConfigError):
    def __init__(self, field: str, expected, got):
        self.field = field
        self.expected = expected
        self.got = got
        super().__init__(f"{field}: expected shape {expected}, got {got}")


class InvalidConfig(ConfigError):
    """Aggregate of all violations found while validating a scenario."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s): {lines}")


class NoConvergence(RuntimeError):
    """The transmit-power fixed point diverged or ran out of iterations."""


class RowSumExceedsLambda(ValueError):
    """A device's offload rates sum to more than its task generation rate."""


class SingularPoint(ArithmeticError):
    """A gradient was requested where a queue denominator vanishes."""


class ZeroPolynomial(ValueError):
    """Root finding was asked for the identically-zero polynomial."""


class InfeasibleInitial(ValueError):
    """The initial strategy profile violates some device's constraints."""


class UnstableSystem(ValueError):
    """A server's utilization is at or above one; no steady state exists."""


class ResolutionTooCoarse(ValueError):
    """The oracle grid holds fewer than 10 feasible points."""
