"""Synthetic regression problems with heavy-tail options.

Covariates are correlated Gaussians (Toeplitz covariance, base 0.5)
behind an intercept column.  The true coefficient vector is an
ascending staircase over the first block of entries.  Noise comes from
one of three families; because the estimators target a conditional
quantile, the truth they chase is the staircase with the intercept
shifted by that quantile, and generate() returns both the data and
that shifted vector.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz
from scipy.stats import norm

from .data import Dataset
from .errors import CholeskyFailure, InvalidSparsity

logger = logging.getLogger(__name__)

NOISE_FAMILIES = ("normal", "cauchy", "exponential")


@dataclass(frozen=True)
class SimDesign:
    n: int
    p: int
    s: int
    noise: str
    tau: float
    seed: int = 0
    rho: float = 0.5

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one row, got n={self.n}")
        if self.p < 1:
            raise ValueError(f"need at least one covariate, got p={self.p}")
        if not 1 <= self.s <= self.p:
            raise InvalidSparsity(
                f"sparsity {self.s} outside [1, {self.p}]")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"correlation base must be in (0, 1), "
                             f"got {self.rho}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"quantile level must be in (0, 1), "
                             f"got {self.tau}")
        if self.noise not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.noise!r}, "
                             f"expected one of {NOISE_FAMILIES}")


def beta_star(s, p):
    """Staircase truth: entry j is 10(j+1)/s for the first s slots.

    Index 0 is the intercept, so the staircase occupies the intercept
    plus the first s-1 covariates and tops out at exactly 10.
    """
    if not 1 <= s <= p + 1:
        raise InvalidSparsity(f"sparsity {s} outside [1, {p + 1}]")
    b = np.zeros(p + 1)
    b[:s] = 10.0 * np.arange(1, s + 1) / s
    return b


def noise_quantile(noise, tau):
    """Analytic quantile of a noise family at level tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {tau}")
    if noise == "normal":
        return float(norm.ppf(tau))
    if noise == "cauchy":
        return float(np.tan(np.pi * (tau - 0.5)))
    if noise == "exponential":
        return float(-np.log1p(-tau))
    raise ValueError(f"unknown noise family {noise!r}")


def noise_mean(noise):
    """Mean of a noise family, or None when it does not exist."""
    if noise == "normal":
        return 0.0
    if noise == "exponential":
        return 1.0
    if noise == "cauchy":
        return None
    raise ValueError(f"unknown noise family {noise!r}")


def _column_streams(design):
    # One counter-based stream per covariate column plus one for the
    # noise, all spawned from the dataset seed, so the draw for column
    # j never depends on how many rows another column consumed.
    root = np.random.SeedSequence(design.seed)
    children = root.spawn(design.p + 1)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def sample_covariates(design, streams=None):
    """Draw the n x (p+1) design: ones column, then correlated normals."""
    if streams is None:
        streams = _column_streams(design)
    cov = toeplitz(design.rho ** np.arange(design.p))
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CholeskyFailure(
            f"covariance factorization failed for rho={design.rho}") from exc
    Z = np.empty((design.n, design.p))
    for j in range(design.p):
        Z[:, j] = streams[j].standard_normal(design.n)
    X = np.empty((design.n, design.p + 1))
    X[:, 0] = 1.0
    X[:, 1:] = Z @ chol.T
    return X


def _sample_noise(design, stream):
    if design.noise == "normal":
        return stream.standard_normal(design.n)
    u = stream.random(design.n)
    if design.noise == "cauchy":
        return np.tan(np.pi * (u - 0.5))
    return -np.log1p(-u)


def generate(design, constant_noise=False):
    """Build a dataset and the coefficient vector it actually encodes.

    Returns (Dataset, effective truth).  The effective truth is the
    staircase with the intercept shifted by the noise quantile at the
    design's level, which is what a quantile fit at that level should
    recover.  constant_noise is a test hook that collapses the noise to
    its quantile, making the data exactly interpolable.
    """
    streams = _column_streams(design)
    X = sample_covariates(design, streams)
    truth = beta_star(design.s, design.p)
    shift = noise_quantile(design.noise, design.tau)
    if constant_noise:
        e = np.full(design.n, shift)
    else:
        e = _sample_noise(design, streams[design.p])
    y = X @ truth + e

    effective = truth.copy()
    effective[0] += shift
    if effective[0] == 0.0:
        raise ValueError(
            "quantile shift cancelled the intercept exactly; evaluation "
            "support would change, pick a different tau or sparsity")

    if design.noise == "cauchy" and design.n >= 40:
        # second moment does not exist; surface how unstable the
        # running variance is without failing anything
        marks = [design.n // 8, design.n // 4, design.n // 2, design.n]
        prefix_vars = [float(np.var(e[:k])) for k in marks]
        logger.debug("cauchy running variance over prefixes %s: %s",
                     marks, prefix_vars)

    return Dataset(X, y, seed=design.seed), effective
