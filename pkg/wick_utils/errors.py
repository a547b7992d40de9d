"""Exception hierarchy for wick-utils.

Every error also derives from the built-in exception a caller would reach for
first, so ``except ValueError`` keeps working around library calls.
"""


class WickError(Exception):
    """Base class for all wick-utils errors."""


class SlotCapError(WickError, ValueError):
    """An enumeration or polynomial degree exceeded the configured slot cap."""

    def __init__(self, size: int, cap: int, what: str = "ground set"):
        self.size = size
        self.cap = cap
        self.what = what
        super().__init__(
            f"{what} has {size} slots, above the cap of {cap} "
            f"(raise it with the WICK_SLOT_CAP environment variable)"
        )


class WellDefinednessError(WickError, ValueError):
    """Wick product requested on random variables that may satisfy a polynomial relation."""


class BasisMismatchError(WickError, TypeError):
    """Appell bases attached to different cumulant models were mixed."""


class GridMismatchError(WickError, ValueError):
    """Kernels, paths or times do not share the same grid."""


class ConvergenceError(WickError, RuntimeError):
    """A series, derivative or quadrature failed its convergence check."""


class ModelError(WickError, ValueError):
    """Invalid model specification or variable outside the model's index set."""


class ConfigurationError(WickError, ValueError):
    """Malformed configuration value or environment override."""


class UnknownExperimentError(WickError, KeyError):
    """Monte Carlo experiment name is not registered."""
