"""Exception hierarchy shared across the package.

The classes map onto CLI exit codes: :class:`ConfigError` means the caller
asked for something malformed (exit 2), the remaining classes mean a
well-formed request that is numerically infeasible for the given inputs
(exit 3).
"""


class MdlabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MdlabError, ValueError):
    """Invalid parameters, flags, or configuration input."""


class InfiniteMomentError(MdlabError, ArithmeticError):
    """A requested absolute moment diverges for the given family."""


class TiltUnsupportedError(MdlabError):
    """Exponential tilting requested for a family without bounded support."""


class BudgetExceededError(MdlabError):
    """An exact method would exceed its instance-size budget."""


class InfeasibleError(MdlabError):
    """A numerically infeasible request, e.g. a drift target outside the
    support hull of the increment law."""
