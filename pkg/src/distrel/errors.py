"""Exception and warning types shared across the package.

Solvers that can return a usable-but-unconverged iterate signal that
through ``NonConvergenceWarning`` rather than an exception; everything
that genuinely cannot proceed raises.
"""


class DistrelError(Exception):
    """Base class for package errors."""


class DimensionMismatch(DistrelError, ValueError):
    """Operands disagree on problem dimensions."""


class EmptyInput(DistrelError, ValueError):
    """An operation received zero rows or an empty collection."""


class InvalidBandwidth(DistrelError, ValueError):
    """Kernel bandwidth must be strictly positive."""


class InvalidSparsity(DistrelError, ValueError):
    """Sparsity level outside 1 <= s <= p."""


class DensityTooSmall(DistrelError, RuntimeError):
    """Aggregated density at zero fell below the numerical floor.

    Dividing by a near-zero density estimate would blow up the
    pseudo-responses, so the caller aborts the iteration instead.
    """

    def __init__(self, density, floor):
        self.density = float(density)
        self.floor = float(floor)
        super().__init__(
            f"estimated density {self.density:.3e} below floor {self.floor:.3e}"
        )


class DegenerateDesign(DistrelError, RuntimeError):
    """Design matrix is unusable (e.g. a zero column where a scale is needed)."""


class CholeskyFailure(DistrelError, RuntimeError):
    """Normal-equations matrix was not positive definite."""


class AllRowsDropped(DistrelError, RuntimeError):
    """Every observation received zero weight; nothing left to fit."""


class WorkerUnreachable(DistrelError, RuntimeError):
    """A worker failed to respond after the retry budget was exhausted."""

    def __init__(self, shard_index, detail=""):
        self.shard_index = int(shard_index)
        msg = f"worker for shard {self.shard_index} is unreachable"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class NonConvergence(DistrelError, RuntimeError):
    """Iterative routine hit its iteration cap without meeting tolerance."""


class NonConvergenceWarning(RuntimeWarning):
    """Solver hit its iteration cap; the returned iterate is still usable."""
