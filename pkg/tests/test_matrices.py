import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msplit_lbi.matrices import (
    MatrixError,
    as_matrix,
    format_float,
    frobenius_norm,
    load_matrix_csv,
    load_matrix_json,
    matmul,
    save_matrix_csv,
    save_matrix_json,
    spectral_norm,
)


def triple_loop_matmul(a, b):
    """Entrywise sum-of-products reference, no BLAS involved."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def charpoly_coeffs(a):
    """Characteristic polynomial of a small symmetric matrix (Faddeev-LeVerrier).

    Returns c with p(x) = x^n + c[0] x^(n-1) + ... + c[n-1].
    """
    n = a.shape[0]
    m = np.zeros_like(a)
    c = []
    coeff = 1.0
    for k in range(1, n + 1):
        m = a @ m + coeff * np.eye(n)
        am = a @ m
        coeff = -np.trace(am) / k
        c.append(coeff)
    return c


def charpoly_largest_root(a, tol=1e-12):
    """Largest eigenvalue of a small symmetric PSD matrix by sign bisection."""
    c = charpoly_coeffs(a)

    def p(x):
        val = 1.0
        for ci in c:
            val = val * x + ci
        return val

    hi = max(np.sum(np.abs(a), axis=1))  # Gershgorin bound
    if hi == 0.0:
        return 0.0
    # Walk down from the bound until the polynomial changes sign, then bisect.
    lo = hi
    step = hi / 1024.0
    while p(lo) > 0 and lo > -step:
        lo -= step
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if p(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


class TestAsMatrix:
    def test_column_promotion(self):
        out = as_matrix([1.0, 2.0, 3.0])
        assert out.shape == (3, 1)

    def test_rejects_3d(self):
        with pytest.raises(MatrixError):
            as_matrix(np.zeros((2, 2, 2)))

    def test_rejects_empty(self):
        with pytest.raises(MatrixError):
            as_matrix(np.zeros((0, 3)))

    def test_rejects_nan(self):
        with pytest.raises(MatrixError):
            as_matrix([[1.0, np.nan]])


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), a), a)

    def test_hand_checked(self):
        out = matmul([[1.0, 2.0], [3.0, 4.0]], [[1.0], [1.0]])
        assert np.array_equal(out, [[3.0], [7.0]])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((5, 4))
        b = rng.standard_normal((4, 3))
        assert np.allclose(matmul(a, b), triple_loop_matmul(a, b), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(MatrixError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestFrobeniusNorm:
    def test_zero(self):
        assert frobenius_norm(np.zeros((4, 2))) == 0.0

    def test_three_four_five(self):
        assert frobenius_norm([[3.0, 4.0]]) == 5.0

    def test_matches_entrywise_oracle(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((6, 7))
        total = 0.0
        for i in range(6):
            for j in range(7):
                total += a[i, j] ** 2
        assert abs(frobenius_norm(a) - np.sqrt(total)) < 1e-12

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 2**32 - 1))
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))
        assert frobenius_norm(a + b) <= frobenius_norm(a) + frobenius_norm(b) + 1e-12


class TestSpectralNorm:
    def test_diagonal(self):
        assert abs(spectral_norm(np.diag([3.0, 1.0])) - 3.0) < 1e-9

    def test_identity(self):
        assert abs(spectral_norm(np.eye(4)) - 1.0) < 1e-9

    def test_matches_charpoly_oracle(self):
        rng = np.random.default_rng(42)
        a = rng.standard_normal((6, 4))
        gram = a.T @ a
        expected = np.sqrt(charpoly_largest_root(gram))
        assert abs(spectral_norm(a) - expected) < 1e-6 * expected

    def test_rank_one(self):
        u = np.array([[1.0], [2.0], [2.0]])
        # ||u v^T||_2 = ||u|| ||v||
        v = np.array([[2.0, 1.0, 2.0]])
        assert abs(spectral_norm(u @ v) - 9.0) < 1e-8


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        a = np.array([[1.5, -2.25], [0.1, 3.0]])
        p = tmp_path / "m.csv"
        save_matrix_csv(p, a)
        assert np.array_equal(load_matrix_csv(p), a)

    def test_round_trip_exact_for_awkward_floats(self, tmp_path):
        a = np.array([[1.0 / 3.0, np.pi], [1e-17, -1e17]])
        p = tmp_path / "m.csv"
        save_matrix_csv(p, a)
        assert np.array_equal(load_matrix_csv(p), a)

    def test_ragged_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1,2\n3\n")
        with pytest.raises(MatrixError, match="ragged"):
            load_matrix_csv(p)

    def test_non_numeric_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1,2\n3,x\n")
        with pytest.raises(MatrixError, match="line 2"):
            load_matrix_csv(p)

    def test_empty_rejected(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(MatrixError):
            load_matrix_csv(p)


class TestJsonRoundTrip:
    def test_round_trip(self, tmp_path):
        a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        p = tmp_path / "m.json"
        save_matrix_json(p, a)
        assert np.array_equal(load_matrix_json(p), a)

    def test_missing_keys(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"rows": 2, "data": [1, 2]}))
        with pytest.raises(MatrixError, match="rows/cols/data"):
            load_matrix_json(p)

    def test_length_mismatch(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"rows": 2, "cols": 2, "data": [1, 2, 3]}))
        with pytest.raises(MatrixError, match="data length"):
            load_matrix_json(p)


def test_format_float_round_trips():
    for x in (0.1, -1e300, 1 / 3, 2.0, 1e-308):
        assert float(format_float(x)) == x
