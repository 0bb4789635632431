"""Shared exception types.

Kept in one place so callers can distinguish usage errors (bad arguments,
mismatched shapes) from numerical failures (divergence, degenerate models)
without string-matching messages.
"""


class UsageError(ValueError):
    """Caller passed arguments that can never be valid (shapes, modes, ranges)."""


class DimensionMismatchError(UsageError):
    """Operands live in different dimensions."""


class DegenerateModelError(RuntimeError):
    """A model collapsed to something with no usable mass (zero total weight,
    all-zero normalizer, non-positive variance)."""


class TrainingDivergedError(RuntimeError):
    """A training statistic left the finite domain, or the cold-start guard fired.

    Carries the step index at which training was aborted.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class OracleConvergenceError(RuntimeError):
    """Grid refinement did not settle; carries both values for inspection."""

    def __init__(self, coarse: float, fine: float, rel_change: float):
        super().__init__(
            f"quadrature not converged: coarse={coarse!r} fine={fine!r} "
            f"rel_change={rel_change:.3e}"
        )
        self.coarse = coarse
        self.fine = fine
        self.rel_change = rel_change


class SupportViolationError(RuntimeError):
    """The denominator density vanishes somewhere the numerator does not."""
