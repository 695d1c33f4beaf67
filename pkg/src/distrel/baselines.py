"""Reference estimators the distributed method is compared against."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .engine import ClusterConfig, default_init_penalty, run_distributed_rel
from .errors import AllRowsDropped, DistrelError
from .kernels import biweight
from .prox import QuadraticProblem, solve_l1_quadratic
from .qr import QrProblem, QrSettings, solve_l1_qr
from .schedules import ProblemScale


def pooled_rel(data, scale, tau, iterations, qr_settings=None,
               solver_settings=None, **config_kw):
    """Single-machine variant: the whole dataset is one shard.

    iterations = 0 short-circuits to the initial penalized quantile
    fit.  Otherwise this is exactly the distributed loop with L = 1,
    so the two stay bitwise interchangeable.
    """
    if iterations == 0:
        lam0 = config_kw.pop("init_penalty", None)
        if lam0 is None:
            lam0 = default_init_penalty(scale)
        if config_kw:
            raise TypeError(f"unused options {sorted(config_kw)} "
                            f"with iterations=0")
        beta = solve_l1_qr(QrProblem(data.X, data.y, tau, lam0),
                           qr_settings or QrSettings())
        return beta, None
    cfg = ClusterConfig(shards=[data], scale=scale, tau=tau,
                        iterations=iterations, **config_kw)
    return run_distributed_rel(cfg, qr_settings=qr_settings,
                               solver_settings=solver_settings)


def shard_penalty(shard):
    """Default quantile-fit penalty for one shard of m rows.

    The 0.25 constant was calibrated once on the synthetic designs:
    it is the strongest penalty in {0.5, 0.25, 0.125} that does not
    degrade the averaged estimate, and validation tuning lands on the
    same choice.  Pass lam= to avg_dc to override.
    """
    m = shard.n
    return 0.25 * np.sqrt(np.log(max(shard.p, m)) / m)


def avg_dc(shards, tau, lam=None, qr_settings=None, max_workers=None):
    """Averaging divide-and-conquer: one quantile fit per shard,
    count-weighted average of the coefficient vectors."""
    if len(shards) == 0:
        raise ValueError("need at least one shard")
    settings = qr_settings or QrSettings()

    def fit(k):
        shard = shards[k]
        lam_k = shard_penalty(shard) if lam is None else lam
        try:
            return solve_l1_qr(QrProblem(shard.X, shard.y, tau, lam_k),
                               settings)
        except DistrelError as exc:
            raise type(exc)(f"shard {k}: {exc}") from exc

    if len(shards) == 1:
        return fit(0)
    if max_workers is None:
        max_workers = min(len(shards), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        fits = list(pool.map(fit, range(len(shards))))
    counts = np.array([s.n for s in shards], dtype=np.float64)
    acc = np.zeros_like(fits[0])
    for c, beta in zip(counts, fits):
        acc += c * beta
    return acc / counts.sum()


def pooled_lasso(data, lam_grid, validation, settings=None,
                 full_output=False):
    """Squared-loss lasso on the full data, penalty picked on a
    held-out set by mean squared error (ties go to the larger
    penalty)."""
    lam_grid = sorted(set(float(l) for l in lam_grid), reverse=True)
    if len(lam_grid) == 0:
        raise ValueError("penalty grid is empty")
    problem = QuadraticProblem(data.X.T @ data.y / data.n, lam_grid[0],
                               design=data.X)
    best = None
    warm = None
    for lam in lam_grid:
        problem.lam = lam
        warm = solve_l1_quadratic(problem, settings, warm_start=warm)
        residual = validation.y - validation.X @ warm
        loss = float(residual @ residual) / validation.n
        if best is None or loss < best[0]:
            best = (loss, lam, warm.copy())
    loss, lam, beta = best
    if full_output:
        return beta, {"lam": lam, "validation_loss": loss}
    return beta


def dependent_rel(data, tau, bandwidth, beta0, lam, settings=None):
    """Pooled variant for noise whose density at zero varies with the
    covariates: rows are reweighted by the square root of their kernel
    weight and both sides of the regression are transformed before a
    single lasso solve.

    The kernel is negative near the edge of its support, and those
    rows carry no usable square-root weight, so only rows with a
    strictly positive kernel value are kept.
    """
    if bandwidth <= 0.0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    beta0 = np.asarray(beta0, dtype=np.float64)
    residual = data.y - data.X @ beta0
    weight = biweight(residual / bandwidth) / bandwidth
    keep = weight > 0.0
    if not np.any(keep):
        raise AllRowsDropped(
            "no residual fell inside the kernel's positive region")
    gamma = np.sqrt(weight[keep])
    Xt = gamma[:, None] * data.X[keep]
    covered = (residual[keep] <= 0.0).astype(np.float64)
    yt = Xt @ beta0 - (covered - tau) / gamma
    kept = Xt.shape[0]
    problem = QuadraticProblem(Xt.T @ yt / kept, lam, design=Xt)
    return solve_l1_quadratic(problem, settings, warm_start=beta0)


def scale_for_pooled(data, s, **kw):
    """ProblemScale for a single-machine run over the whole dataset."""
    return ProblemScale(n=data.n, m=data.n, p=data.p, s=s, **kw)
