"""Per-shard sufficient statistics for the distributed solver.

Each worker reduces its rows to two dense vectors (a moment vector of
design rows against transformed responses, and the local Gram matrix
applied to the current coefficients) plus a row count and a local
density estimate.  That is the entire payload a shard ever ships, so
communication stays linear in the number of columns; local Gram
matrices are never sent anywhere.
"""

import struct

import numpy as np

from .data import Dataset
from .errors import DensityTooSmall, DimensionMismatch, EmptyInput

# Floor below which an aggregated density estimate is considered too
# unreliable to divide by.  Shared with the engine, which aborts the
# round when the aggregate lands at or under this value.
DENSITY_FLOOR = 1e-4

_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")


def _check_f0_tau(f0, tau):
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")
    if not f0 > DENSITY_FLOOR:
        raise DensityTooSmall(float(f0), DENSITY_FLOOR)


def pseudo_responses(shard, beta, f0, tau):
    """Transform responses so a squared-loss fit mimics the quantile fit.

    Each response becomes the fitted value minus the scaled, centered
    coverage indicator: fitted - (1{y <= fitted} - tau) / f0.  Ties
    count as covered.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (shard.ncols,):
        raise DimensionMismatch(
            f"coefficients have shape {beta.shape}, design has "
            f"{shard.ncols} columns")
    _check_f0_tau(f0, tau)
    fitted = shard.X @ beta
    covered = (shard.y <= fitted).astype(np.float64)
    return fitted - (covered - tau) / f0


class ShardSummary:
    """One shard's contribution to a distributed update round."""

    __slots__ = ("z_nk", "sigma_beta", "density_local", "count")

    def __init__(self, z_nk, sigma_beta, density_local, count):
        z_nk = np.ascontiguousarray(z_nk, dtype=np.float64)
        sigma_beta = np.ascontiguousarray(sigma_beta, dtype=np.float64)
        if z_nk.ndim != 1 or sigma_beta.shape != z_nk.shape:
            raise DimensionMismatch(
                "summary vectors must be 1-d and equally sized, got "
                f"{z_nk.shape} and {sigma_beta.shape}")
        if not (np.all(np.isfinite(z_nk)) and np.all(np.isfinite(sigma_beta))
                and np.isfinite(density_local)):
            raise ValueError("summary entries must all be finite")
        count = int(count)
        if count < 1:
            raise ValueError(f"count must be at least 1, got {count}")
        self.z_nk = z_nk
        self.sigma_beta = sigma_beta
        self.density_local = float(density_local)
        self.count = count

    @property
    def dim(self):
        return self.z_nk.shape[0]

    def to_bytes(self):
        """Serialize as little-endian f64 with length-prefixed vectors."""
        parts = []
        for vec in (self.z_nk, self.sigma_beta):
            parts.append(_U64.pack(vec.shape[0]))
            parts.append(vec.astype("<f8", copy=False).tobytes())
        parts.append(_F64.pack(self.density_local))
        parts.append(_U64.pack(self.count))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, payload):
        offset = 0

        def take(size):
            nonlocal offset
            if offset + size > len(payload):
                raise ValueError("summary payload truncated")
            chunk = payload[offset:offset + size]
            offset += size
            return chunk

        vecs = []
        for _ in range(2):
            (length,) = _U64.unpack(take(8))
            vecs.append(np.frombuffer(take(8 * length), dtype="<f8").copy())
        (density,) = _F64.unpack(take(8))
        (count,) = _U64.unpack(take(8))
        if offset != len(payload):
            raise ValueError("summary payload has trailing bytes")
        return cls(vecs[0], vecs[1], density, count)


def shard_summary(shard, beta, f0, tau, density_local=0.0):
    """Reduce one shard to its update-round statistics.

    The moment vector averages design rows weighted by the transformed
    responses; the second vector is the local Gram matrix applied to
    the current coefficients.  The density estimate is carried along
    verbatim since it is produced by a separate round.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (shard.ncols,):
        raise DimensionMismatch(
            f"coefficients have shape {beta.shape}, design has "
            f"{shard.ncols} columns")
    _check_f0_tau(f0, tau)
    fitted = shard.X @ beta
    covered = (shard.y <= fitted).astype(np.float64)
    transformed = fitted - (covered - tau) / f0
    m = shard.n
    z = shard.X.T @ transformed / m
    sigma_beta = shard.X.T @ fitted / m
    return ShardSummary(z, sigma_beta, density_local, m)


def _weighted_mean(vectors, counts):
    if len(vectors) == 1:
        return vectors[0].copy()
    total = counts.sum()
    acc = np.zeros_like(vectors[0])
    for vec, c in zip(vectors, counts):
        acc += c * vec
    return acc / total


def assemble_linear_term(summaries, first_shard_sigma_beta, beta_prev):
    """Combine shard summaries into the quadratic subproblem's target.

    Returns the count-weighted mean of the moment vectors, corrected by
    the gap between the first shard's Gram action and the pooled one:
    mean(z) + first_sigma_beta - mean(sigma_beta).  Summaries must
    arrive in ascending shard order so the reduction is reproducible.
    """
    if len(summaries) == 0:
        raise EmptyInput("no shard summaries to assemble")
    first_shard_sigma_beta = np.asarray(first_shard_sigma_beta,
                                        dtype=np.float64)
    dim = summaries[0].dim
    for s in summaries:
        if s.dim != dim:
            raise DimensionMismatch(
                f"summary dimensions disagree: {s.dim} vs {dim}")
    if first_shard_sigma_beta.shape != (dim,):
        raise DimensionMismatch(
            f"first shard Gram action has shape "
            f"{first_shard_sigma_beta.shape}, summaries have dim {dim}")
    beta_prev = np.asarray(beta_prev, dtype=np.float64)
    if beta_prev.shape != (dim,):
        raise DimensionMismatch(
            f"previous coefficients have shape {beta_prev.shape}, "
            f"summaries have dim {dim}")
    counts = np.array([s.count for s in summaries], dtype=np.float64)
    z_mean = _weighted_mean([s.z_nk for s in summaries], counts)
    sigma_mean = _weighted_mean([s.sigma_beta for s in summaries], counts)
    return z_mean + (first_shard_sigma_beta - sigma_mean)
