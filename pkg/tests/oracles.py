"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written with different algorithms than
the library (coordinate descent instead of accelerated proximal
gradient, an LP reformulation instead of ADMM, brute-force grids and
quadrature instead of closed forms) so agreement between the two is
meaningful evidence, not a tautology.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog


def soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def cd_l1_quadratic(A, b, lam, max_sweeps=200000, tol=1e-13, x0=None):
    """Cyclic coordinate descent for 0.5*x'Ax - b'x + lam*|x|_1.

    A must be symmetric PSD with strictly positive diagonal for the
    coordinate updates to be well defined.  Runs until the largest
    coordinate move in a full sweep falls below ``tol``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b.size
    x = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float).copy()
    Ax = A @ x
    diag = np.diag(A).copy()
    if np.any(diag <= 0):
        raise ValueError("coordinate descent needs positive diagonal")
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(d):
            old = x[j]
            rho_j = b[j] - Ax[j] + diag[j] * old
            new = soft(rho_j, lam) / diag[j]
            if new != old:
                Ax += A[:, j] * (new - old)
                x[j] = new
                biggest = max(biggest, abs(new - old))
        if biggest <= tol:
            break
    return x


def lp_l1_qr(X, y, tau, lam):
    """l1-penalized quantile regression via its exact LP reformulation.

    Variables (u, v, bp, bn) >= 0 with y - X(bp - bn) = u - v and cost
    (1/m) * sum(tau*u + (1-tau)*v) + lam * sum(bp + bn).  Solved with
    the HiGHS simplex through scipy.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m, d = X.shape
    c = np.concatenate([
        np.full(m, tau / m),
        np.full(m, (1.0 - tau) / m),
        np.full(d, lam),
        np.full(d, lam),
    ])
    eye = np.eye(m)
    A_eq = np.hstack([eye, -eye, X, -X])
    res = linprog(c, A_eq=A_eq, b_eq=y, bounds=[(0, None)] * (2 * m + 2 * d),
                  method="highs")
    if not res.success:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    bp = res.x[2 * m: 2 * m + d]
    bn = res.x[2 * m + d:]
    return bp - bn


def grid_prox_check(u, gamma, tau, width=None, points=2_000_001):
    """Brute-force minimizer of tau-check(x) + (x-u)^2 / (2*gamma)."""
    if width is None:
        width = 2.0 * (abs(u) + gamma + 1.0)
    xs = np.linspace(-width, width, points)
    check = xs * (tau - (xs <= 0))
    obj = check + (xs - u) ** 2 / (2.0 * gamma)
    return xs[np.argmin(obj)]


def simpson(f, a, b, intervals=100_000):
    """Composite Simpson rule; ``intervals`` must be even."""
    if intervals % 2:
        intervals += 1
    xs = np.linspace(a, b, intervals + 1)
    ys = f(xs)
    h = (b - a) / intervals
    return h / 3.0 * (ys[0] + ys[-1]
                      + 4.0 * ys[1:-1:2].sum() + 2.0 * ys[2:-2:2].sum())


def check_loss(r, tau):
    r = np.asarray(r, dtype=float)
    return float(np.mean(r * (tau - (r <= 0))))


def empirical_quantile_orderstat(values, tau):
    """Smallest order statistic q with #{v <= q} >= ceil(m*tau)."""
    v = np.sort(np.asarray(values, dtype=float))
    k = int(np.ceil(tau * v.size))
    k = min(max(k, 1), v.size)
    return v[k - 1]


def dense_linear_term(shards, beta_prev, first_index=0):
    """Monolithic recomputation of the distributed linear term.

    Concatenates all shards, forms the pooled moment vector of design
    rows times pseudo-responses is NOT done here (the caller passes
    shard pseudo-responses already baked into z terms); instead this
    oracle recomputes b = mean_i x_i*yt_i + (S1 - S)beta_prev with
    dense Grams, where S1 is the first shard's Gram and S the pooled
    Gram, yt the pseudo-responses supplied per shard.
    """
    Xs = [np.asarray(s[0], dtype=float) for s in shards]
    yts = [np.asarray(s[1], dtype=float) for s in shards]
    Xall = np.vstack(Xs)
    ytall = np.concatenate(yts)
    n = Xall.shape[0]
    S = Xall.T @ Xall / n
    X1 = Xs[first_index]
    S1 = X1.T @ X1 / X1.shape[0]
    z = Xall.T @ ytall / n
    return z + (S1 - S) @ np.asarray(beta_prev, dtype=float)


def power_iteration_reference(A):
    """Dense eigendecomposition stand-in for the largest eigenvalue."""
    return float(np.linalg.eigvalsh(np.asarray(A, dtype=float))[-1])


def kkt_residual_reference(A, b, lam, x):
    """Subgradient stationarity gap for 0.5 x'Ax - b'x + lam|x|_1."""
    g = A @ x - b
    res = 0.0
    for j in range(x.size):
        if x[j] != 0.0:
            res = max(res, abs(g[j] + lam * np.sign(x[j])))
        else:
            res = max(res, max(abs(g[j]) - lam, 0.0))
    return res
