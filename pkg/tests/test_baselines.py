import itertools

import numpy as np
import pytest

from msplit_lbi.baselines import (
    FitError,
    cd_path_fit,
    elastic_net_fit,
    enet_objective,
    lambda_grid,
    lasso_fit,
    ols_fit,
    ridge_fit,
    ridge_grid_fit,
    _cd_kernel,
)
from msplit_lbi.matrices import MatrixError
from msplit_lbi.solver import soft_threshold


def random_instance(seed, n=50, d=5, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    beta = rng.standard_normal((d, 1))
    y = X @ beta + noise * rng.standard_normal((n, 1))
    return X, y, beta


def lasso_objective(X, y, beta, lam):
    return enet_objective(X, y, beta, lam, 0.0)


def lasso_by_sign_enumeration(X, y, lam):
    """Exhaustive search over sign patterns with a closed-form solve each.

    For a fixed sign vector s the stationarity condition on the active set A
    is X_A^T X_A / N beta_A = X_A^T y / N - lam * s_A; a candidate is valid if
    the solved signs match and the inactive correlations are below lam, but
    simply taking the objective-minimizing candidate is enough for an oracle.
    """
    n, d = X.shape
    G = X.T @ X / n
    c = (X.T @ y / n).ravel()
    best, best_obj = np.zeros((d, 1)), lasso_objective(X, y, np.zeros((d, 1)), lam)
    for signs in itertools.product((-1, 0, 1), repeat=d):
        s = np.array(signs, dtype=float)
        active = s != 0
        if not active.any():
            continue
        try:
            ba = np.linalg.solve(G[np.ix_(active, active)], (c - lam * s)[active])
        except np.linalg.LinAlgError:
            continue
        if np.any(np.sign(ba) != s[active]):
            continue
        beta = np.zeros((d, 1))
        beta[active, 0] = ba
        obj = lasso_objective(X, y, beta, lam)
        if obj < best_obj:
            best, best_obj = beta, obj
    return best, best_obj


def kkt_violation(X, y, beta, lam1, lam2=0.0):
    """Largest violation of the elastic-net first-order conditions."""
    n = X.shape[0]
    g = (X.T @ (X @ beta - y)) / n + lam2 * beta
    worst = 0.0
    for j in range(beta.shape[0]):
        for k in range(beta.shape[1]):
            if beta[j, k] != 0.0:
                worst = max(worst, abs(g[j, k] + lam1 * np.sign(beta[j, k])))
            else:
                worst = max(worst, max(0.0, abs(g[j, k]) - lam1))
    return worst


class TestOls:
    def test_identity_design(self):
        y = np.array([[1.0], [2.0], [3.0]])
        assert np.allclose(ols_fit(np.eye(3), y), y)

    def test_noiseless_recovery(self):
        X, _, beta = random_instance(1, noise=0.0)
        y = X @ beta
        assert np.allclose(ols_fit(X, y), beta, atol=1e-8)

    def test_residual_orthogonality(self):
        X, y, _ = random_instance(2)
        beta = ols_fit(X, y)
        assert np.linalg.norm(X.T @ (y - X @ beta)) < 1e-8

    def test_rank_deficient_rejected(self):
        X = np.ones((4, 2))  # duplicate columns
        with pytest.raises(FitError):
            ols_fit(X, np.ones((4, 1)))


class TestRidge:
    def test_zero_penalty_equals_ols(self):
        X, y, _ = random_instance(3)
        assert np.allclose(ridge_fit(X, y, 0.0), ols_fit(X, y), atol=1e-10)

    def test_norm_shrinks_monotonically(self):
        X, y, _ = random_instance(4)
        norms = [np.linalg.norm(ridge_fit(X, y, lam)) for lam in (0.0, 0.1, 1.0, 10.0, 100.0)]
        assert all(a > b for a, b in zip(norms, norms[1:]))
        assert norms[-1] < 0.1 * norms[0]

    def test_negative_penalty_rejected(self):
        X, y, _ = random_instance(5)
        with pytest.raises(ValueError):
            ridge_fit(X, y, -0.5)

    def test_grid_fit_matches_single_fits(self):
        X, y, _ = random_instance(6)
        lams = [0.01, 0.5, 2.0]
        grid = ridge_grid_fit(X, y, lams)
        for i, lam in enumerate(lams):
            assert np.allclose(grid[i], ridge_fit(X, y, lam), atol=1e-10)


class TestLasso:
    def test_lambda_max_deactivates(self):
        X, y, _ = random_instance(7)
        lam_max = np.max(np.abs(X.T @ y)) / X.shape[0]
        assert not lasso_fit(X, y, lam_max).any()
        assert lasso_fit(X, y, 0.9 * lam_max).any()

    def test_orthonormal_closed_form(self):
        rng = np.random.default_rng(8)
        q, _ = np.linalg.qr(rng.standard_normal((40, 6)))
        n = q.shape[0]
        X = np.sqrt(n) * q  # X^T X = N I
        y = rng.standard_normal((n, 1))
        lam = 0.15
        expect = soft_threshold(X.T @ y / n, lam)
        assert np.allclose(lasso_fit(X, y, lam), expect, atol=1e-7)

    def test_matches_sign_enumeration_oracle(self):
        X, y, _ = random_instance(9, n=30, d=3)
        for lam in (0.05, 0.3, 1.0):
            beta = lasso_fit(X, y, lam)
            _, best_obj = lasso_by_sign_enumeration(X, y, lam)
            assert lasso_objective(X, y, beta, lam) <= best_obj + 1e-6

    def test_kkt_residuals(self):
        for seed in range(5):
            X, y, _ = random_instance(20 + seed, n=40, d=8)
            for lam in (0.02, 0.2, 0.8):
                beta = lasso_fit(X, y, lam)
                assert kkt_violation(X, y, beta, lam) < 1e-6


class TestElasticNet:
    def test_degenerate_penalties(self):
        X, y, _ = random_instance(10)
        assert np.allclose(elastic_net_fit(X, y, 0.0, 0.7), ridge_fit(X, y, 0.7), atol=1e-7)
        assert np.allclose(elastic_net_fit(X, y, 0.3, 0.0), lasso_fit(X, y, 0.3), atol=1e-12)

    def test_scalar_closed_form(self):
        # X = 1 (N=1): beta = S(y, l1) / (1 + l2).
        for y0, l1, l2 in ((2.0, 0.5, 1.0), (-1.2, 0.3, 0.4), (0.2, 0.5, 2.0)):
            beta = elastic_net_fit([[1.0]], [[y0]], l1, l2)[0, 0]
            expect = float(soft_threshold(y0, l1)) / (1.0 + l2)
            assert abs(beta - expect) < 1e-10

    def test_kkt_residuals(self):
        X, y, _ = random_instance(11, n=40, d=8)
        beta = elastic_net_fit(X, y, 0.1, 0.5)
        assert kkt_violation(X, y, beta, 0.1, 0.5) < 1e-6

    def test_objective_nonincreasing_over_sweeps(self):
        X, y, _ = random_instance(12, n=30, d=6)
        n = X.shape[0]
        G = X.T @ X / n
        c = np.ascontiguousarray((X.T @ y / n)[:, 0])
        lam1, lam2 = 0.1, 0.2
        objs = []
        for sweeps in (1, 2, 4, 8, 16):
            beta = np.zeros(6)
            _cd_kernel(G, c, beta, lam1, lam2, 0.0, sweeps)
            objs.append(enet_objective(X, y, beta.reshape(-1, 1), lam1, lam2))
        assert all(a >= b - 1e-12 for a, b in zip(objs, objs[1:]))

    def test_negative_penalty_rejected(self):
        X, y, _ = random_instance(13)
        with pytest.raises(ValueError):
            elastic_net_fit(X, y, -0.1, 0.0)


class TestLambdaGrid:
    def test_two_points(self):
        g = lambda_grid(2.0, 2)
        assert np.array_equal(g.values, [0.0, 2.0])

    def test_uniform_gaps(self):
        g = lambda_grid(5.0, 500)
        gaps = np.diff(g.values)
        assert np.all(np.abs(gaps - gaps[0]) < 1e-12)
        assert g.values[0] == 0.0 and g.values[-1] == 5.0

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            lambda_grid(0.0, 10)
        with pytest.raises(ValueError):
            lambda_grid(1.0, 1)


class TestCdPathFit:
    def test_matches_cold_fits(self):
        X, y, _ = random_instance(14, n=40, d=6)
        lam1s = np.array([1.0, 0.5, 0.2, 0.05])
        lam2s = np.array([0.5, 0.25, 0.1, 0.025])
        path = cd_path_fit(X, y, lam1s, lam2s)
        for i in range(len(lam1s)):
            cold = elastic_net_fit(X, y, lam1s[i], lam2s[i])
            assert np.allclose(path[i], cold[:, 0], atol=1e-6)

    def test_single_column_only(self):
        X, y, _ = random_instance(15)
        with pytest.raises(MatrixError):
            cd_path_fit(X, np.hstack([y, y]), [0.1], [0.0])
