"""Estimation-error and support-recovery metrics."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class SupportMetrics:
    precision: float
    recall: float
    f1: float
    true_positives: int
    false_positives: int
    false_negatives: int


def l2_error(est, truth):
    """Euclidean distance to the truth, absolute and relative."""
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape:
        raise DimensionMismatch(
            f"estimate has shape {est.shape}, truth has {truth.shape}")
    truth_norm = float(np.linalg.norm(truth))
    if truth_norm == 0.0:
        raise ValueError("relative error is undefined against a zero truth")
    absolute = float(np.linalg.norm(est - truth))
    return absolute, absolute / truth_norm


def support_metrics(est, truth, zero_tol=0.0):
    """Precision, recall, and F1 of the selected coordinate set.

    A coordinate is selected when its magnitude strictly exceeds
    zero_tol; the reference set is wherever the truth is nonzero.  The
    solvers produce exact zeros, so the default tolerance of 0 needs no
    tuning.  An empty selection scores 0 precision rather than NaN.
    """
    if zero_tol < 0.0:
        raise ValueError(f"zero_tol must be nonnegative, got {zero_tol}")
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape:
        raise DimensionMismatch(
            f"estimate has shape {est.shape}, truth has {truth.shape}")
    selected = np.abs(est) > zero_tol
    actual = truth != 0.0
    tp = int(np.count_nonzero(selected & actual))
    fp = int(np.count_nonzero(selected & ~actual))
    fn = int(np.count_nonzero(~selected & actual))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    if precision + recall > 0.0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
    return SupportMetrics(precision, recall, f1, tp, fp, fn)
