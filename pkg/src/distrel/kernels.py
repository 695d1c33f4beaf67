"""Density estimation at the origin of the residual distribution.

The kernel is a sixth-degree polynomial supported on [-1, 1].  It
integrates to one and its second moment vanishes (it dips below zero
near the edges), which keeps the bias of the plug-in density estimate
small even with the fairly large bandwidths the early iterations use.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, EmptyInput, InvalidBandwidth


def biweight(x):
    """Kernel value(s): -(315/64)x^6 + (735/64)x^4 - (525/64)x^2 + 105/64
    inside [-1, 1], exactly zero outside."""
    arr = np.asarray(x, dtype=np.float64)
    x2 = arr * arr
    val = ((-(315.0 / 64.0) * x2 + (735.0 / 64.0)) * x2
           - (525.0 / 64.0)) * x2 + (105.0 / 64.0)
    out = np.where(np.abs(arr) <= 1.0, val, 0.0)
    if np.isscalar(x) or getattr(x, "ndim", 0) == 0:
        return float(out)
    return out


def local_density_at_zero(shard, beta, h):
    """Kernel density of the shard's residuals, evaluated at zero.

    Residuals are y - X beta; the estimate is sum(K(r_i/h)) / (count*h).
    Can come out negative on small shards because the kernel itself
    takes negative values; the caller guards the aggregate.
    """
    if h <= 0:
        raise InvalidBandwidth(f"bandwidth must be positive, got {h}")
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (shard.ncols,):
        raise DimensionMismatch(
            f"coefficients {beta.shape} do not match design "
            f"({shard.n}, {shard.ncols})")
    residuals = shard.y - shard.X @ beta
    return float(np.sum(biweight(residuals / h)) / (shard.n * h))


def aggregate_density(parts):
    """Pool per-shard density values into the full-sample estimate.

    ``parts`` is a sequence of (density, count) pairs; the result is the
    count-weighted mean, which reproduces the pooled estimator exactly
    because each shard's value is itself a mean over its rows.
    """
    if len(parts) == 0:
        raise EmptyInput("no density values to aggregate")
    values = np.array([float(v) for v, _ in parts])
    counts = np.array([int(c) for _, c in parts], dtype=np.int64)
    if np.any(counts < 1):
        raise ValueError("every shard must report a positive count")
    return float(np.dot(values, counts) / counts.sum())
