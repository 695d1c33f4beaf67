"""Iteration schedules: error rate, bandwidth, penalty, and budget.

All formulas use the natural logarithm.  Two rate sequences appear:

* ``rate_a`` is the theoretical error-rate recursion.  Its second term
  contracts only when s^2 log(n)/m <= 1; outside that regime (large
  sparsity on small shards) it grows, so nothing downstream may consume
  it blindly for g >= 1.
* ``practical_rate`` is what the running schedules actually consume:
  the initial fit's rate at g = 0 (where no recursion product exists),
  then the damped sequence whose damping constant c0 exists precisely
  to pull s^2 log(n)/m below one.  The bandwidth schedule is the damped
  sequence itself, and the penalty schedule reads the practical rate at
  the previous iteration.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import InvalidSparsity

HARD_ITERATION_CAP = 100
DEFAULT_ITERATIONS = 50


@dataclass(frozen=True)
class ProblemScale:
    """Sizes that drive the schedules.

    n: total sample size, m: first-shard sample size, p: number of
    covariates (design width minus the intercept), s: sparsity level,
    c0_bandwidth: damping constant inside the decaying bandwidth term,
    C0_lambda: multiplier on the penalty schedule.
    """

    n: int
    m: int
    p: int
    s: int
    c0_bandwidth: float = 0.1
    C0_lambda: float = 1.0

    def __post_init__(self):
        if not 1 <= self.s <= self.p:
            raise InvalidSparsity(
                f"sparsity {self.s} outside [1, p={self.p}]")
        if not 1 <= self.m <= self.n:
            raise ValueError(
                f"shard size {self.m} must lie in [1, n={self.n}]")
        if self.c0_bandwidth <= 0 or self.C0_lambda <= 0:
            raise ValueError("schedule constants must be positive")


def rate_a(scale, g):
    """Theoretical error rate after g refinement passes (g >= 0)."""
    if g < 0:
        raise ValueError(f"iteration index must be >= 0, got {g}")
    n, m, s = scale.n, scale.m, scale.s
    ln = math.log(n)
    return math.sqrt(s * ln / n) + s ** ((2 * g + 1) / 2) * (ln / m) ** ((g + 1) / 2)


def bandwidth_h(scale, g):
    """Kernel bandwidth for refinement pass g >= 1.

    sqrt(s log n / n) + s^(-1/2) * (c0 s^2 log n / m)^((g+1)/2); the
    second term decays geometrically once c0 s^2 log(n)/m < 1.
    """
    if g < 1:
        raise ValueError(f"bandwidth is defined for g >= 1, got {g}")
    n, m, s = scale.n, scale.m, scale.s
    ln = math.log(n)
    damped = scale.c0_bandwidth * s * s * ln / m
    return math.sqrt(s * ln / n) + damped ** ((g + 1) / 2) / math.sqrt(s)


def practical_rate(scale, g):
    """Rate sequence the running schedules consume (g >= 0).

    At g = 0 this is the initial fit's rate (no recursion involved);
    from g = 1 on it is the damped sequence, which keeps shrinking at
    scales where the undamped recursion would grow.
    """
    if g == 0:
        return rate_a(scale, 0)
    return bandwidth_h(scale, g)


def lambda_reg(scale, g):
    """Penalty level for refinement pass g >= 1.

    C0 * (sqrt(log n / n) + r_(g-1) * sqrt(s log n / m)) where r is the
    practical rate sequence, so the penalty tracks how accurate the
    previous iterate is believed to be.
    """
    if g < 1:
        raise ValueError(f"penalty is defined for g >= 1, got {g}")
    n, m, s = scale.n, scale.m, scale.s
    ln = math.log(n)
    rate_prev = practical_rate(scale, g - 1)
    return scale.C0_lambda * (math.sqrt(ln / n)
                              + rate_prev * math.sqrt(s * ln / m))


def iteration_budget(scale):
    """Smallest pass count after which the slow term stops dominating.

    Solves t >= log(n/m) / log(c0 m / (s^2 log n)) and clamps to
    [1, 100].  When the denominator's argument is not > 1 the bound is
    vacuous; the hard cap is returned with a warning.
    """
    n, m, s = scale.n, scale.m, scale.s
    ln = math.log(n)
    contraction = scale.c0_bandwidth * m / (s * s * ln)
    if contraction <= 1.0:
        warnings.warn(
            f"contraction factor {contraction:.3g} <= 1; iteration bound "
            f"is vacuous, returning the hard cap {HARD_ITERATION_CAP}",
            UserWarning, stacklevel=2)
        return HARD_ITERATION_CAP
    if n == m:
        return 1
    t = math.ceil(math.log(n / m) / math.log(contraction))
    return max(1, min(HARD_ITERATION_CAP, t))
