import numpy as np
import pytest

from rada import linalg
from rada.errors import DimensionError, NotPositiveDefinite, ShrinkageFailed

from conftest import random_pd


def naive_matmul(a, b):
    """Triple-loop reference product, independent of the library path."""
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(linalg.matmul(np.eye(2), m), m)

    def test_hand_case(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[0.0], [1.0]])
        assert np.array_equal(linalg.matmul(a, b), np.array([[2.0], [4.0]]))

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((5, 3))
        b = rng.standard_normal((3, 4))
        assert np.max(np.abs(linalg.matmul(a, b) - naive_matmul(a, b))) <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            linalg.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            linalg.matmul(np.array([[np.nan, 1.0]]), np.ones((2, 1)))


class TestCholesky:
    def test_identity(self):
        assert np.array_equal(linalg.cholesky(np.eye(3)).lower, np.eye(3))

    def test_hand_case(self):
        factor = linalg.cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
        expected = np.array([[2.0, 0.0], [1.0, np.sqrt(2.0)]])
        assert np.max(np.abs(factor.lower - expected)) <= 1e-12

    def test_reconstruction(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((6, 4))
        m = a.T @ a + 0.1 * np.eye(4)
        lower = linalg.cholesky(m).lower
        rel = np.linalg.norm(lower @ lower.T - m) / np.linalg.norm(m)
        assert rel <= 1e-10

    def test_non_pd_reports_pivot(self):
        m = np.diag([1.0, -1.0, 2.0])
        with pytest.raises(NotPositiveDefinite) as exc:
            linalg.cholesky(m)
        assert exc.value.pivot_index == 1

    def test_rejects_asymmetric(self):
        with pytest.raises(DimensionError):
            linalg.cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_roundtrip_property(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            m = random_pd(5, rng)
            lower = linalg.cholesky(m).lower
            rel = np.linalg.norm(lower @ lower.T - m) / np.linalg.norm(m)
            assert rel <= 1e-10
            assert np.all(np.diag(lower) > 0)


class TestLogdet:
    def test_identity(self):
        assert linalg.logdet_pd(np.eye(4)) == 0.0

    def test_scaled_identity(self):
        assert abs(linalg.logdet_pd(2.0 * np.eye(2)) - 2.0 * np.log(2.0)) <= 1e-12

    def test_matches_eigenvalue_oracle(self):
        rng = np.random.default_rng(3)
        m = random_pd(5, rng)
        oracle = float(np.sum(np.log(np.linalg.eigvalsh(m))))
        assert abs(linalg.logdet_pd(m) - oracle) <= 1e-9 * abs(oracle)

    def test_scaling_law(self):
        rng = np.random.default_rng(4)
        k = 4
        m = random_pd(k, rng)
        for s in (0.5, 3.0, 17.0):
            got = linalg.logdet_pd(s * m)
            assert abs(got - (linalg.logdet_pd(m) + k * np.log(s))) <= 1e-9


class TestInverse:
    def test_identity(self):
        assert np.max(np.abs(linalg.inverse_pd(np.eye(4)) - np.eye(4))) <= 1e-14

    def test_diagonal(self):
        got = linalg.inverse_pd(np.diag([4.0, 1.0]))
        assert np.max(np.abs(got - np.diag([0.25, 1.0]))) <= 1e-14

    def test_residual(self):
        rng = np.random.default_rng(5)
        m = random_pd(6, rng)
        inv = linalg.inverse_pd(m)
        assert np.max(np.abs(m @ inv - np.eye(6))) <= 1e-8
        assert np.max(np.abs(inv - inv.T)) <= 1e-10

    def test_involution(self):
        rng = np.random.default_rng(6)
        m = random_pd(5, rng)
        back = linalg.inverse_pd(linalg.inverse_pd(m))
        assert np.linalg.norm(back - m) / np.linalg.norm(m) <= 1e-7


class TestShrink:
    def test_pd_untouched(self):
        m = np.eye(3)
        shifted, c = linalg.shrink_to_pd(m, 1e-6)
        assert c == 0.0
        assert np.array_equal(shifted, m)

    def test_zero_matrix(self):
        shifted, c = linalg.shrink_to_pd(np.zeros((3, 3)), 1e-6)
        assert c == 1e-6
        assert np.array_equal(shifted, 1e-6 * np.eye(3))

    def test_rank_one_uses_smallest_passing_multiple(self):
        v = np.array([[1.0], [2.0], [3.0]])
        m = v @ v.T
        eps0 = 1e-6
        _, c = linalg.shrink_to_pd(m, eps0)
        # c is the smallest multiple in the tried ladder that factorizes
        ladder = [0.0] + [eps0 * 10.0**j for j in range(12)]
        assert c in ladder
        linalg.cholesky(m + c * np.eye(3))
        for smaller in [t for t in ladder if t < c]:
            with pytest.raises(NotPositiveDefinite):
                linalg.cholesky(m + smaller * np.eye(3))

    def test_gives_up_after_escalations(self):
        m = np.diag([-1e9, 1.0])
        with pytest.raises(ShrinkageFailed):
            linalg.shrink_to_pd(m, 1e-6)

    def test_rejects_bad_eps0(self):
        with pytest.raises(ValueError):
            linalg.shrink_to_pd(np.eye(2), 0.0)


def test_determinism():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((8, 8))
    m = a.T @ a + 0.5 * np.eye(8)
    b = rng.standard_normal((8, 3))
    assert np.array_equal(linalg.matmul(m, b), linalg.matmul(m.copy(), b.copy()))
    assert np.array_equal(
        linalg.cholesky(m).lower, linalg.cholesky(m.copy()).lower
    )
    assert linalg.logdet_pd(m) == linalg.logdet_pd(m.copy())
    assert np.array_equal(linalg.inverse_pd(m), linalg.inverse_pd(m.copy()))
