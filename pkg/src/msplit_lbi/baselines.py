"""Reference estimators: OLS, ridge, lasso and elastic net.

All quadratic losses use the 1/(2N) convention, so the lasso deactivation
threshold is max_j |X_j^T y| / N and penalty grids are comparable across
sample sizes.  Lasso and elastic net are solved by cyclic coordinate descent
on the Gram formulation; ridge and OLS use symmetric positive-definite
solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .matrices import MatrixError, as_matrix

MAX_SWEEPS = 100_000
CD_TOL = 1e-8


class FitError(RuntimeError):
    """Estimator failure: singular system or non-convergence."""


def ols_fit(X, y) -> np.ndarray:
    """Least-squares fit via the normal equations (requires full column rank)."""
    X = as_matrix(X, "X")
    y = as_matrix(y, "y")
    if X.shape[0] != y.shape[0]:
        raise MatrixError("X and y row counts differ")
    gram = X.T @ X
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular normal equations (rank-deficient design)") from exc
    rhs = X.T @ y
    z = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, z)


def ridge_fit(X, y, lam: float) -> np.ndarray:
    """Minimize (1/(2N))||y - X b||^2 + (lam/2)||b||^2."""
    X = as_matrix(X, "X")
    y = as_matrix(y, "y")
    if X.shape[0] != y.shape[0]:
        raise MatrixError("X and y row counts differ")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    n = X.shape[0]
    a = X.T @ X / n + lam * np.eye(X.shape[1])
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular ridge system; increase lambda") from exc
    rhs = X.T @ y / n
    z = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, z)


@njit(cache=True, nogil=True)
def _cd_kernel(G, c, beta, lam1, lam2, tol, max_sweeps):
    """Cyclic coordinate descent on (1/2) b'Gb - c'b + lam2/2 ||b||^2 + lam1 ||b||_1.

    ``G`` is X^T X / N and ``c`` is X^T y / N.  Mutates ``beta`` in place and
    returns the sweep count, or -1 when the sweep cap is hit.  ``tol`` is on
    the max coordinate change per sweep; tol=0 runs exactly max_sweeps sweeps.
    """
    d = beta.shape[0]
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(d):
            bj = beta[j]
            rho = c[j] - np.dot(G[j], beta) + G[j, j] * bj
            if rho > lam1:
                bn = (rho - lam1) / (G[j, j] + lam2)
            elif rho < -lam1:
                bn = (rho + lam1) / (G[j, j] + lam2)
            else:
                bn = 0.0
            beta[j] = bn
            delta = abs(bn - bj)
            if delta > max_delta:
                max_delta = delta
        if max_delta < tol:
            return sweep + 1
    return -1


def _cd_fit(X, y, lam1, lam2, tol=CD_TOL, max_sweeps=MAX_SWEEPS):
    X = as_matrix(X, "X")
    y = as_matrix(y, "y")
    if X.shape[0] != y.shape[0]:
        raise MatrixError("X and y row counts differ")
    if lam1 < 0 or lam2 < 0:
        raise ValueError("penalties must be nonnegative")
    n, d = X.shape
    G = X.T @ X / n
    C = X.T @ y / n
    out = np.zeros((d, y.shape[1]))
    for j in range(y.shape[1]):
        beta = np.zeros(d)
        sweeps = _cd_kernel(G, np.ascontiguousarray(C[:, j]), beta, lam1, lam2, tol, max_sweeps)
        if sweeps < 0:
            raise FitError(f"coordinate descent did not converge in {max_sweeps} sweeps")
        out[:, j] = beta
    return out


def lasso_fit(X, y, lam: float) -> np.ndarray:
    """Minimize (1/(2N))||y - X b||^2 + lam ||b||_1, per response column."""
    return _cd_fit(X, y, lam, 0.0)


def elastic_net_fit(X, y, lam_l1: float, lam_l2: float) -> np.ndarray:
    """Minimize (1/(2N))||y - X b||^2 + (lam_l2/2)||b||^2 + lam_l1 ||b||_1."""
    return _cd_fit(X, y, lam_l1, lam_l2)


def enet_objective(X, y, beta, lam_l1: float, lam_l2: float) -> float:
    X = as_matrix(X, "X")
    y = as_matrix(y, "y")
    beta = as_matrix(beta, "beta")
    r = y - X @ beta
    n = X.shape[0]
    return float(
        np.sum(r * r) / (2.0 * n)
        + 0.5 * lam_l2 * np.sum(beta * beta)
        + lam_l1 * np.sum(np.abs(beta))
    )


@dataclass(frozen=True)
class LambdaGrid:
    values: np.ndarray
    lambda_max: float

    def __post_init__(self):
        v = self.values
        if v[0] != 0.0 or v[-1] != self.lambda_max:
            raise ValueError("grid must span [0, lambda_max]")
        if np.any(np.diff(v) <= 0):
            raise ValueError("grid values must be strictly increasing")


def lambda_grid(lambda_max: float, n_points: int) -> LambdaGrid:
    """Uniform penalty grid {0, ..., lambda_max} with n_points values."""
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    values = np.linspace(0.0, lambda_max, n_points)
    values[-1] = lambda_max
    return LambdaGrid(values=values, lambda_max=float(lambda_max))


def ridge_grid_fit(X, y, lams) -> np.ndarray:
    """Ridge solutions for every lambda at once via one eigendecomposition.

    Returns an array of shape (len(lams), d, p).
    """
    X = as_matrix(X, "X")
    y = as_matrix(y, "y")
    n = X.shape[0]
    evals, vecs = np.linalg.eigh(X.T @ X / n)
    c = vecs.T @ (X.T @ y / n)
    lams = np.asarray(lams, dtype=float)
    out = np.empty((len(lams), X.shape[1], y.shape[1]))
    for i, lam in enumerate(lams):
        denom = evals + lam
        if np.any(denom <= 0):
            raise FitError("singular ridge system on the grid (lambda too small)")
        out[i] = vecs @ (c / denom[:, None])
    return out


def cd_path_fit(X, y, lam1s, lam2s, tol=CD_TOL, max_sweeps=MAX_SWEEPS) -> np.ndarray:
    """Warm-started coordinate-descent fits along a penalty sequence.

    ``lam1s``/``lam2s`` are parallel sequences, visited in the given order
    with the previous solution as the starting point.  Single-column y only;
    returns shape (len(lam1s), d).
    """
    X = as_matrix(X, "X")
    y = as_matrix(y, "y")
    if y.shape[1] != 1:
        raise MatrixError("cd_path_fit expects a single response column")
    n, d = X.shape
    G = X.T @ X / n
    c = np.ascontiguousarray((X.T @ y / n)[:, 0])
    beta = np.zeros(d)
    out = np.empty((len(lam1s), d))
    for i, (l1, l2) in enumerate(zip(lam1s, lam2s)):
        sweeps = _cd_kernel(G, c, beta, float(l1), float(l2), tol, max_sweeps)
        if sweeps < 0:
            raise FitError(f"coordinate descent did not converge in {max_sweeps} sweeps")
        out[i] = beta
    return out
