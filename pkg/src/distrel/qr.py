"""l1-penalized quantile regression via ADMM.

The fit minimizes (1/m) * sum_i check_tau(y_i - x_i'beta) + lam*|beta|_1
by splitting the residual vector and the coefficient vector into their
own blocks, each with a cheap proximal step, and solving the coupling
normal equations with one cached Cholesky factorization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    CholeskyFailure,
    DimensionMismatch,
    EmptyInput,
    NonConvergenceWarning,
)
from .prox import soft_threshold


def check_loss(residuals, tau):
    """Mean tau-weighted absolute deviation: r * (tau - 1{r <= 0})."""
    r = np.asarray(residuals, dtype=np.float64)
    return float(np.mean(r * (tau - (r <= 0.0))))


def quantile_prox(u, gamma, tau):
    '''
    Proximal map of gamma * check_tau at u.

    Shifts u toward zero, landing exactly on zero inside the dead zone
    [-gamma*(1-tau), gamma*tau]:

        u - gamma*tau        if u >  gamma*tau
        0                    if -gamma*(1-tau) <= u <= gamma*tau
        u + gamma*(1-tau)    if u < -gamma*(1-tau)
    '''
    arr = np.asarray(u, dtype=np.float64)
    hi = gamma * tau
    lo = -gamma * (1.0 - tau)
    out = np.where(arr > hi, arr - hi, np.where(arr < lo, arr - lo, 0.0))
    if np.isscalar(u) or getattr(u, "ndim", 0) == 0:
        return float(out)
    return out


@dataclass
class QrSettings:
    rho: float = 1.0
    relax: float = 1.5
    rel_tol: float = 1e-6
    max_iters: int = 5000


class QrProblem:
    """Quantile regression data: design with an intercept column of
    ones at index 0, responses, level tau in (0,1), penalty lam >= 0."""

    def __init__(self, design, response, tau, lam):
        X = np.ascontiguousarray(design, dtype=np.float64)
        y = np.ascontiguousarray(response, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch(f"design must be 2-d, got {X.shape}")
        if X.shape[0] == 0:
            raise EmptyInput("no observations")
        if y.shape != (X.shape[0],):
            raise DimensionMismatch(
                f"response {y.shape} does not match design {X.shape}")
        if not np.all(X[:, 0] == 1.0):
            raise ValueError("design column 0 must be the all-ones intercept")
        if not 0.0 < tau < 1.0:
            raise ValueError(f"tau must lie strictly inside (0,1), got {tau}")
        if lam < 0:
            raise ValueError(f"penalty must be nonnegative, got {lam}")
        self.X = X
        self.y = y
        self.tau = float(tau)
        self.lam = float(lam)

    @property
    def m(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


def solve_l1_qr(problem, settings=None, warm_start=None, full_output=False):
    """Fit the penalized quantile regression.

    Splitting: r = y - X beta (residual block, quantile prox) and
    z = beta (coefficient block, soft threshold).  The residual
    constraint is weighted by 1/m so its prox has unit scale, the
    coefficient constraint by settings.rho; both blocks are
    over-relaxed.  Stops when scaled primal and dual residual norms
    both drop below settings.rel_tol; warns NonConvergenceWarning at
    the iteration cap.  Returns the coefficient block, which has exact
    zeros wherever the soft threshold landed in its dead zone.
    """
    if settings is None:
        settings = QrSettings()
    X, y, tau, lam = problem.X, problem.y, problem.tau, problem.lam
    m, d = X.shape
    rho, alpha = settings.rho, settings.relax

    M = X.T @ X / m + rho * np.eye(d)
    try:
        chol = cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rho>0 guards
        raise CholeskyFailure(str(exc)) from None

    if warm_start is None:
        beta = np.zeros(d)
    else:
        beta = np.asarray(warm_start, dtype=np.float64).copy()
        if beta.shape != (d,):
            raise DimensionMismatch(
                f"warm start {beta.shape} does not match design {X.shape}")
    z = beta.copy()
    r = quantile_prox(y - X @ beta, 1.0, tau)
    u = np.zeros(m)
    w = np.zeros(d)

    converged = False
    iters = 0
    for iters in range(1, settings.max_iters + 1):
        rhs = X.T @ (y - r - u) / m + rho * (z - w)
        beta = cho_solve(chol, rhs)
        Xb = X @ beta

        Xb_hat = alpha * Xb + (1.0 - alpha) * (y - r)
        beta_hat = alpha * beta + (1.0 - alpha) * z

        r_old, z_old = r, z
        r = quantile_prox(y - Xb_hat - u, 1.0, tau)
        z = soft_threshold(beta_hat + w, lam / rho)
        u = u + Xb_hat + r - y
        w = w + beta_hat - z

        pri = np.sqrt(np.sum((Xb + r - y) ** 2) + np.sum((beta - z) ** 2))
        dual = np.sqrt(np.sum((X.T @ (r - r_old) / m) ** 2)
                       + np.sum((rho * (z - z_old)) ** 2))
        eps_pri = settings.rel_tol * max(
            1.0,
            np.sqrt(np.sum(Xb ** 2) + np.sum(beta ** 2)),
            np.sqrt(np.sum(r ** 2) + np.sum(z ** 2)),
            float(np.linalg.norm(y)),
        )
        eps_dual = settings.rel_tol * max(
            1.0, np.sqrt(np.sum((X.T @ u / m) ** 2) + np.sum((rho * w) ** 2)))
        if pri <= eps_pri and dual <= eps_dual:
            converged = True
            break

    if not converged:
        warnings.warn(
            f"quantile fit stopped at the {settings.max_iters}-iteration cap",
            NonConvergenceWarning, stacklevel=2)
    if full_output:
        info = {"iterations": iters, "converged": converged,
                "primal_residual": float(pri), "dual_residual": float(dual)}
        return z, info
    return z
