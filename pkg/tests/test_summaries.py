"""Tests for pseudo-responses, shard summaries, and the linear term."""

import numpy as np
import pytest

from distrel.data import Dataset
from distrel.errors import DensityTooSmall, DimensionMismatch, EmptyInput
from distrel.summaries import (
    DENSITY_FLOOR,
    ShardSummary,
    assemble_linear_term,
    pseudo_responses,
    shard_summary,
)

import oracles


def reference_pseudo(X, y, beta, f0, tau):
    """Independent inline recomputation of the transformed responses."""
    fitted = X @ beta
    return fitted - ((y <= fitted).astype(float) - tau) / f0


class TestPseudoResponses:
    def test_positive_residual_example(self):
        # residual +1 leaves the indicator at 0, so the shift is +tau/f0
        shard = Dataset(np.array([[1.0, 2.0]]), np.array([4.0]))
        beta = np.array([1.0, 1.0])  # fitted = 3, residual = +1
        out = pseudo_responses(shard, beta, f0=0.5, tau=0.3)
        assert out[0] == pytest.approx(3.0 + 0.6, abs=1e-15)

    def test_negative_residual_example(self):
        shard = Dataset(np.array([[1.0, 2.0]]), np.array([2.0]))
        beta = np.array([1.0, 1.0])  # fitted = 3, residual = -1
        out = pseudo_responses(shard, beta, f0=0.5, tau=0.3)
        assert out[0] == pytest.approx(3.0 - 1.4, abs=1e-15)

    def test_tie_counts_as_covered(self):
        # residual exactly zero: the indicator fires
        shard = Dataset(np.array([[1.0]]), np.array([5.0]))
        out = pseudo_responses(shard, np.array([5.0]), f0=1.0, tau=0.3)
        assert out[0] == pytest.approx(5.0 - 0.7, abs=1e-15)

    def test_balanced_residuals_cancel_at_median(self):
        rng = np.random.default_rng(5)
        m = 40
        X = np.column_stack([np.ones(m), rng.standard_normal(m)])
        beta = np.array([0.5, -1.0])
        fitted = X @ beta
        resid = np.concatenate([np.full(m // 2, 1.0), np.full(m // 2, -1.0)])
        shard = Dataset(X, fitted + resid)
        out = pseudo_responses(shard, beta, f0=1.0, tau=0.5)
        assert np.mean(out - fitted) == pytest.approx(0.0, abs=1e-14)

    def test_density_floor_enforced(self):
        shard = Dataset(np.ones((2, 1)), np.zeros(2))
        for f0 in (DENSITY_FLOOR, DENSITY_FLOOR / 2, 0.0, -1.0):
            with pytest.raises(DensityTooSmall):
                pseudo_responses(shard, np.zeros(1), f0=f0, tau=0.5)

    def test_tau_validated(self):
        shard = Dataset(np.ones((2, 1)), np.zeros(2))
        with pytest.raises(ValueError):
            pseudo_responses(shard, np.zeros(1), f0=1.0, tau=1.0)

    def test_matches_reference_on_random_data(self):
        rng = np.random.default_rng(21)
        X = np.column_stack([np.ones(30), rng.standard_normal((30, 3))])
        y = rng.standard_normal(30)
        beta = rng.standard_normal(4)
        shard = Dataset(X, y)
        out = pseudo_responses(shard, beta, f0=0.8, tau=0.25)
        np.testing.assert_array_equal(out,
                                      reference_pseudo(X, y, beta, 0.8, 0.25))


class TestShardSummary:
    def test_zero_beta_identity_design(self):
        # with beta = 0 the moment vector collapses to
        # -(1/m) * sum X_i (1{y_i <= 0} - tau)
        m = 6
        X = np.eye(m)
        y = np.array([1.0, -1.0, 0.0, 2.0, -2.0, 3.0])
        tau = 0.3
        shard = Dataset(X, y)
        s = shard_summary(shard, np.zeros(m), f0=1.0, tau=tau)
        expected = -(X.T @ ((y <= 0).astype(float) - tau)) / m
        np.testing.assert_allclose(s.z_nk, expected, atol=1e-15)
        np.testing.assert_array_equal(s.sigma_beta, np.zeros(m))
        assert s.count == m

    def test_sigma_beta_picks_gram_column(self):
        rng = np.random.default_rng(3)
        X = np.column_stack([np.ones(50), rng.standard_normal((50, 4))])
        shard = Dataset(X, rng.standard_normal(50))
        gram = X.T @ X / 50
        for j in range(5):
            e = np.zeros(5)
            e[j] = 1.0
            s = shard_summary(shard, e, f0=1.0, tau=0.5)
            np.testing.assert_allclose(s.sigma_beta, gram[:, j], atol=1e-12)

    def test_half_shards_average_to_pooled(self):
        rng = np.random.default_rng(9)
        X = np.column_stack([np.ones(80), rng.standard_normal((80, 3))])
        y = rng.standard_normal(80)
        beta = rng.standard_normal(4)
        pooled = shard_summary(Dataset(X, y), beta, f0=0.7, tau=0.4)
        a = shard_summary(Dataset(X[:40], y[:40]), beta, f0=0.7, tau=0.4)
        b = shard_summary(Dataset(X[40:], y[40:]), beta, f0=0.7, tau=0.4)
        z_avg = (40 * a.z_nk + 40 * b.z_nk) / 80
        sb_avg = (40 * a.sigma_beta + 40 * b.sigma_beta) / 80
        np.testing.assert_allclose(z_avg, pooled.z_nk, atol=1e-12)
        np.testing.assert_allclose(sb_avg, pooled.sigma_beta, atol=1e-12)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ShardSummary(z_nk=np.array([np.nan]), sigma_beta=np.zeros(1),
                         density_local=0.0, count=1)
        with pytest.raises(ValueError):
            ShardSummary(z_nk=np.zeros(1), sigma_beta=np.zeros(1),
                         density_local=0.0, count=0)


class TestSerialization:
    def test_round_trip_bitwise(self):
        rng = np.random.default_rng(13)
        s = ShardSummary(z_nk=rng.standard_normal(7) * 1e-8,
                         sigma_beta=rng.standard_normal(7) * 1e8,
                         density_local=0.123456789,
                         count=421)
        back = ShardSummary.from_bytes(s.to_bytes())
        np.testing.assert_array_equal(back.z_nk, s.z_nk)
        np.testing.assert_array_equal(back.sigma_beta, s.sigma_beta)
        assert back.density_local == s.density_local
        assert back.count == s.count

    def test_negative_zero_preserved(self):
        s = ShardSummary(z_nk=np.array([-0.0]), sigma_beta=np.array([0.0]),
                         density_local=0.0, count=1)
        back = ShardSummary.from_bytes(s.to_bytes())
        assert np.signbit(back.z_nk[0])
        assert not np.signbit(back.sigma_beta[0])

    def test_size_linear_in_dimension(self):
        def summary_of_dim(d):
            return ShardSummary(z_nk=np.zeros(d), sigma_beta=np.zeros(d),
                                density_local=0.0, count=1)

        # two vectors with 8-byte length prefixes plus two scalars
        for d in (1, 10, 501):
            assert len(summary_of_dim(d).to_bytes()) == 2 * (8 + 8 * d) + 16

    def test_truncated_payload_rejected(self):
        s = ShardSummary(z_nk=np.zeros(3), sigma_beta=np.zeros(3),
                         density_local=0.0, count=1)
        with pytest.raises(ValueError):
            ShardSummary.from_bytes(s.to_bytes()[:-4])


class TestAssembleLinearTerm:
    @staticmethod
    def make_summaries(rng, counts, d=5, f0=0.9, tau=0.35, beta=None):
        if beta is None:
            beta = rng.standard_normal(d)
        shards = []
        summaries = []
        for c in counts:
            X = np.column_stack([np.ones(c), rng.standard_normal((c, d - 1))])
            y = rng.standard_normal(c)
            shards.append((X, y))
            summaries.append(shard_summary(Dataset(X, y), beta, f0, tau))
        return shards, summaries, beta

    def test_single_shard_returns_moment_vector_exactly(self):
        rng = np.random.default_rng(31)
        _, summaries, _ = self.make_summaries(rng, [30])
        b = assemble_linear_term(summaries, summaries[0].sigma_beta,
                                 np.zeros(5))
        np.testing.assert_array_equal(b, summaries[0].z_nk)

    def test_identical_shards_cancel_gram_difference(self):
        rng = np.random.default_rng(32)
        X = np.column_stack([np.ones(20), rng.standard_normal((20, 4))])
        y = rng.standard_normal(20)
        beta = rng.standard_normal(5)
        s = shard_summary(Dataset(X, y), beta, f0=1.0, tau=0.5)
        copies = [
            shard_summary(Dataset(X, y), beta, f0=1.0, tau=0.5)
            for _ in range(3)
        ]
        b = assemble_linear_term(copies, copies[0].sigma_beta, beta)
        np.testing.assert_allclose(b, s.z_nk, rtol=0, atol=1e-13)

    def test_matches_dense_oracle_three_shards(self):
        rng = np.random.default_rng(33)
        f0, tau = 0.8, 0.3
        shards, summaries, beta = self.make_summaries(
            rng, [40, 25, 35], f0=f0, tau=tau)
        b = assemble_linear_term(summaries, summaries[0].sigma_beta, beta)
        pseudo_shards = [
            (X, reference_pseudo(X, y, beta, f0, tau)) for X, y in shards
        ]
        ref = oracles.dense_linear_term(pseudo_shards, beta)
        assert np.max(np.abs(b - ref)) < 1e-10

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            assemble_linear_term([], np.zeros(3), np.zeros(3))

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(34)
        _, summaries, beta = self.make_summaries(rng, [10, 10])
        with pytest.raises(DimensionMismatch):
            assemble_linear_term(summaries, np.zeros(4), beta)
