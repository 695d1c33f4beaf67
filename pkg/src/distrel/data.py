"""Dataset container and the on-disk shard format.

A dataset is a dense design matrix plus the response vector.  Rows are
observations.  By convention the first design column is the intercept
(all ones) for model data, but the container itself does not enforce
that; solvers that need it check it themselves.

Shard files are a small binary format so workers in socket mode can
ingest their slice from disk without re-running generation:

    magic   4 bytes  b"DRSH"
    version u8       currently 1
    n       u64 LE   number of rows
    p       u64 LE   design columns minus one
    seed    u64 LE   generation seed (0 when not applicable)
    X       n*(p+1) float64 LE, row-major
    y       n float64 LE
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DimensionMismatch, EmptyInput

_MAGIC = b"DRSH"
_VERSION = 1
_HEADER = struct.Struct("<4sBQQQ")


class Dataset:
    """Design matrix ``X`` (n rows, d columns) and response ``y`` (n)."""

    def __init__(self, X, y, seed=0):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch(f"design must be 2-d, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DimensionMismatch(
                f"response length {y.shape} does not match design {X.shape}"
            )
        if X.shape[0] == 0:
            raise EmptyInput("dataset has no rows")
        self.X = X
        self.y = y
        self.seed = int(seed)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def ncols(self):
        return self.X.shape[1]

    @property
    def p(self):
        """Number of covariates when column 0 is the intercept."""
        return self.X.shape[1] - 1

    def rows(self, idx):
        """New dataset holding the given row slice (copies)."""
        return Dataset(self.X[idx], self.y[idx], seed=self.seed)

    def split(self, num_shards):
        """Partition rows into contiguous shards.

        Shard sizes differ by at most one; earlier shards take the
        remainder, matching ``np.array_split``.
        """
        if not 1 <= num_shards <= self.n:
            raise EmptyInput(
                f"cannot split {self.n} rows into {num_shards} shards"
            )
        bounds = np.array_split(np.arange(self.n), num_shards)
        return [self.rows(b) for b in bounds]

    def __repr__(self):
        return f"Dataset(n={self.n}, ncols={self.ncols}, seed={self.seed})"

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, self.n, self.ncols - 1,
                                  self.seed & 0xFFFFFFFFFFFFFFFF))
            fh.write(self.X.astype("<f8", copy=False).tobytes(order="C"))
            fh.write(self.y.astype("<f8", copy=False).tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read(_HEADER.size)
            if len(raw) < _HEADER.size:
                raise EmptyInput(f"{path}: truncated header")
            magic, version, n, p, seed = _HEADER.unpack(raw)
            if magic != _MAGIC:
                raise ValueError(f"{path}: not a shard file (magic {magic!r})")
            if version != _VERSION:
                raise ValueError(f"{path}: unsupported shard version {version}")
            d = p + 1
            body = np.frombuffer(fh.read(n * d * 8), dtype="<f8")
            if body.size != n * d:
                raise EmptyInput(f"{path}: truncated design block")
            X = body.reshape(n, d)
            y = np.frombuffer(fh.read(n * 8), dtype="<f8")
            if y.size != n:
                raise EmptyInput(f"{path}: truncated response block")
        return cls(X, y, seed=seed)
