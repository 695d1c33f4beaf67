"""l1-penalized quadratic solver.

Minimizes 0.5 * beta' A beta - b' beta + lam * ||beta||_1 for a PSD
matrix A given either explicitly or implicitly through a design matrix
X (then A = X'X / rows).  The solver is an accelerated proximal
gradient scheme with a fixed step 1/L, a monotone safeguard, and a
function-value restart, so the recorded objective never increases and
the returned iterate carries a checkable stationarity certificate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDesign,
    DimensionMismatch,
    NonConvergence,
    NonConvergenceWarning,
)

# Gram matrices are materialized when the d x d product is at most this
# factor times the cost of keeping the design implicit (2 passes of m*d
# work per product), i.e. when d <= _GRAM_FACTOR * m.
_GRAM_FACTOR = 8

_POWER_SEED = 0x5EED


def soft_threshold(v, t):
    """Shrink ``v`` toward zero by ``t``, clipping the dead zone to 0."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@dataclass
class SolverSettings:
    rel_tol: float = 1e-8
    max_iters: int = 20000


class QuadraticProblem:
    """Problem data for the penalized quadratic objective.

    Exactly one of ``gram`` (the d x d matrix A) or ``design`` (an
    m x d matrix X with A = X'X / m) must be given.  A design is
    materialized into an explicit Gram when d <= 8 * m, which is when
    the one-off d*d*m product beats repeated two-pass products.
    """

    def __init__(self, b, lam, gram=None, design=None):
        b = np.asarray(b, dtype=np.float64).ravel()
        if (gram is None) == (design is None):
            raise ValueError("give exactly one of gram= or design=")
        if lam < 0:
            raise ValueError(f"penalty must be nonnegative, got {lam}")
        self.b = b
        self.lam = float(lam)
        self.design = None
        if gram is not None:
            gram = np.asarray(gram, dtype=np.float64)
            if gram.shape != (b.size, b.size):
                raise DimensionMismatch(
                    f"gram {gram.shape} incompatible with b of length {b.size}")
            self.gram = gram
        else:
            design = np.asarray(design, dtype=np.float64)
            if design.ndim != 2 or design.shape[1] != b.size:
                raise DimensionMismatch(
                    f"design {design.shape} incompatible with b of length "
                    f"{b.size}")
            m, d = design.shape
            if d <= _GRAM_FACTOR * m:
                self.gram = design.T @ design / m
            else:
                self.gram = None
                self.design = design
        self._lmax = None

    @property
    def dim(self):
        return self.b.size

    def matvec(self, v):
        if self.gram is not None:
            return self.gram @ v
        return self.design.T @ (self.design @ v) / self.design.shape[0]

    def objective(self, beta, Abeta=None):
        if Abeta is None:
            Abeta = self.matvec(beta)
        return (0.5 * float(beta @ Abeta) - float(self.b @ beta)
                + self.lam * float(np.abs(beta).sum()))


def largest_eigenvalue(problem, rel_tol=1e-10, max_iters=20000):
    """Largest eigenvalue of the problem's quadratic term.

    Plain power iteration from a fixed-seed start vector, so repeated
    calls on equal data give bit-identical answers.  Raises
    NonConvergence if the Rayleigh quotient has not stabilized within
    the iteration cap (for example when the top eigenvalues are
    numerically tied but have very different eigenvectors).
    """
    if problem._lmax is not None:
        return problem._lmax
    rng = np.random.default_rng(_POWER_SEED)
    v = rng.standard_normal(problem.dim)
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    for _ in range(max_iters):
        w = problem.matvec(v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # v is in the null space; a PSD matrix with Av = 0 along a
            # random start is zero for all practical purposes
            problem._lmax = 0.0
            return 0.0
        v = w / norm_w
        lam = float(v @ problem.matvec(v))
        if abs(lam - lam_prev) <= rel_tol * max(lam, 1e-30):
            problem._lmax = lam
            return lam
        lam_prev = lam
    raise NonConvergence(
        f"power iteration did not stabilize in {max_iters} iterations")


def kkt_residual(problem, beta):
    """Worst-coordinate violation of subgradient stationarity.

    On coordinates with beta_j != 0 the gradient must cancel
    lam*sign(beta_j) exactly; on zero coordinates it may be anything
    inside [-lam, lam].  Zero iff beta minimizes the objective.
    """
    beta = np.asarray(beta, dtype=np.float64)
    g = problem.matvec(beta) - problem.b
    lam = problem.lam
    live = beta != 0.0
    res = 0.0
    if np.any(live):
        res = float(np.max(np.abs(g[live] + lam * np.sign(beta[live]))))
    if np.any(~live):
        res = max(res, float(np.max(np.maximum(np.abs(g[~live]) - lam, 0.0))))
    return res


def solve_l1_quadratic(problem, settings=None, warm_start=None,
                       full_output=False):
    """Minimize the penalized quadratic objective.

    Parameters
    ----------
    problem : QuadraticProblem
    settings : SolverSettings, optional
    warm_start : array, optional
        Starting iterate; defaults to zero.
    full_output : bool
        When true, also return a dict with iteration count, the final
        stationarity gap, the per-accepted-step objective history, and
        a convergence flag.

    Returns the coefficient vector (with exact zeros where the
    proximal step lands in the dead zone), or ``(beta, info)`` with
    ``full_output=True``.  If the iteration cap is reached first, a
    NonConvergenceWarning is issued and the last iterate is returned.
    """
    if settings is None:
        settings = SolverSettings()
    b = problem.b
    lam = problem.lam
    L = largest_eigenvalue(problem)
    if L <= 1e-300:
        raise DegenerateDesign("quadratic term is numerically zero")
    # tiny inflation keeps the descent guarantee safe against the
    # power-iteration tolerance
    step = 1.0 / (L * (1.0 + 1e-9))
    tol = settings.rel_tol * (1.0 + float(np.max(np.abs(b))) if b.size else 1.0)

    if warm_start is None:
        x = np.zeros(problem.dim)
        Ax = np.zeros(problem.dim)
    else:
        x = np.asarray(warm_start, dtype=np.float64).copy()
        if x.shape != (problem.dim,):
            raise DimensionMismatch(
                f"warm start of shape {x.shape}, problem dim {problem.dim}")
        Ax = problem.matvec(x)
    fx = problem.objective(x, Ax)
    y, Ay = x, Ax
    t = 1.0
    history = [fx] if full_output else None
    converged = False
    gap = np.inf
    iters = 0

    for iters in range(1, settings.max_iters + 1):
        x_new = soft_threshold(y - step * (Ay - b), step * lam)
        Ax_new = problem.matvec(x_new)
        f_new = problem.objective(x_new, Ax_new)
        if f_new > fx:
            # momentum overshot: restart from the last accepted iterate
            # with a plain proximal gradient step, which cannot ascend
            t = 1.0
            x_new = soft_threshold(x - step * (Ax - b), step * lam)
            Ax_new = problem.matvec(x_new)
            f_new = problem.objective(x_new, Ax_new)
        g = Ax_new - b
        live = x_new != 0.0
        gap = 0.0
        if np.any(live):
            gap = float(np.max(np.abs(g[live] + lam * np.sign(x_new[live]))))
        if np.any(~live):
            gap = max(gap, float(np.max(np.maximum(np.abs(g[~live]) - lam,
                                                   0.0))))
        if history is not None:
            history.append(f_new)
        if gap <= tol:
            x, Ax, fx = x_new, Ax_new, f_new
            converged = True
            break
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        coef = (t - 1.0) / t_next
        y = x_new + coef * (x_new - x)
        Ay = Ax_new + coef * (Ax_new - Ax)
        x, Ax, fx, t = x_new, Ax_new, f_new, t_next

    if not converged:
        warnings.warn(
            f"stopped after {settings.max_iters} iterations with "
            f"stationarity gap {gap:.3e} > {tol:.3e}",
            NonConvergenceWarning, stacklevel=2)
    if full_output:
        info = {"iterations": iters, "kkt": gap, "converged": converged,
                "objective_history": history}
        return x, info
    return x
