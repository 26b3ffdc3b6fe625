"""Exception types raised across the package."""


class IqcLmiError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(IqcLmiError, ValueError):
    pass


class SingularResolvent(IqcLmiError, ArithmeticError):
    """``i*omega*I - A`` is numerically singular."""


class UnstableBlowup(IqcLmiError, ArithmeticError):
    """A simulated state left the overflow guard."""


class InvalidSignature(IqcLmiError, ValueError):
    """A value-set matrix violates its sign requirement (r <= 0 or R <= 0)."""


class Unsupported(IqcLmiError, ValueError):
    pass


class UnsupportedSet(Unsupported):
    pass


class UnsupportedCombination(Unsupported):
    pass


class StaticKind(IqcLmiError, ValueError):
    """A dynamic-only operation was requested for a static recipe."""


class MissingVariable(IqcLmiError, KeyError):
    pass


class NoPerformanceChannel(IqcLmiError, ValueError):
    pass


class MembershipViolation(IqcLmiError, ValueError):
    """An uncertainty sample left the value set."""


class InfeasibleWitness(IqcLmiError, ValueError):
    pass


class LinkOutOfRange(IqcLmiError, ValueError):
    pass
