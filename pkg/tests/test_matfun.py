import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmala.errors import NotPositiveDefinite
from hmala.matfun import (
    PHI1_SERIES_THRESHOLD,
    phi1_scalar,
    phi1_series,
    phi1_spectral,
    phi1_sym,
    spd_factor,
    sym_eig,
)

from oracles import expm_taylor, phi1_direct, random_symmetric, rel_err

# 30-digit values from mpmath
PHI1_AT_1 = 1.71828182845904523536
PHI1_AT_MINUS_2 = 0.43233235838169365405
PHI1_NEAR_THRESHOLD = {
    1e-2: 1.00501670841680575432,
    -1e-2: 0.99501662508319464251,
    0.0099999: 1.00501665808222076021,
    5e-3: 1.00250417188021267677,
    0.05: 1.02542192752048079539,
}


class TestPhi1Scalar:
    def test_zero(self):
        assert phi1_scalar(0.0) == 1.0

    @pytest.mark.parametrize("x, expected", [(1.0, PHI1_AT_1), (-2.0, PHI1_AT_MINUS_2)])
    def test_closed_form_values(self, x, expected):
        assert phi1_scalar(x) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("x", sorted(PHI1_NEAR_THRESHOLD))
    def test_both_sides_of_series_threshold(self, x):
        assert phi1_scalar(x) == pytest.approx(PHI1_NEAR_THRESHOLD[x], rel=1e-15)

    @given(st.floats(-0.1, 0.1))
    def test_matches_12_term_series(self, x):
        assert phi1_scalar(x) == pytest.approx(phi1_series(x, 12), rel=1e-12)

    @given(st.floats(-700, 700))
    def test_positive(self, x):
        assert phi1_scalar(x) > 0

    def test_vectorized(self):
        x = np.array([-2.0, 0.0, 1e-3, 1.0])
        out = phi1_scalar(x)
        assert out.shape == (4,)
        np.testing.assert_allclose(out, [phi1_scalar(v) for v in x], rtol=0, atol=0)

    def test_threshold_value(self):
        assert PHI1_SERIES_THRESHOLD == 1e-2

    def test_overflow_gives_inf(self):
        assert phi1_scalar(1000.0) == math.inf


class TestSymEig:
    def test_identity(self):
        dec = sym_eig(np.eye(2))
        np.testing.assert_allclose(dec.eigenvalues, [1, 1])
        np.testing.assert_allclose(dec.reconstruct(), np.eye(2), atol=1e-14)

    def test_diagonal(self):
        dec = sym_eig(np.diag([-3.0, 5.0]))
        np.testing.assert_allclose(dec.eigenvalues, [-3, 5])
        np.testing.assert_allclose(np.abs(dec.eigenvectors), np.eye(2), atol=1e-14)

    def test_two_by_two_covariance(self):
        dec = sym_eig([[3.0, 2.0], [2.0, 3.0]])
        np.testing.assert_allclose(dec.eigenvalues, [1.0, 5.0], rtol=1e-14)
        s = 1 / math.sqrt(2)
        # sign convention: first non-negligible component positive
        np.testing.assert_allclose(dec.eigenvectors[:, 0], [s, -s], atol=1e-14)
        np.testing.assert_allclose(dec.eigenvectors[:, 1], [s, s], atol=1e-14)

    def test_ascending_and_sign_convention_random(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            m, _ = random_symmetric(rng, 5, -10, 10)
            dec = sym_eig(m)
            assert np.all(np.diff(dec.eigenvalues) >= 0)
            for col in dec.eigenvectors.T:
                first = col[np.abs(col) > 1e-12][0]
                assert first > 0

    def test_symmetrizes_input(self):
        a = np.array([[1.0, 2.0 + 1e-13], [2.0, 1.0]])
        dec = sym_eig(a)
        np.testing.assert_allclose(dec.reconstruct(), 0.5 * (a + a.T), atol=1e-13)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            sym_eig([[np.nan, 0], [0, 1]])

    @settings(max_examples=60, deadline=None)
    @given(dim=st.integers(1, 10), seed=st.integers(0, 2**32 - 1))
    def test_reconstruction_and_orthogonality(self, dim, seed):
        rng = np.random.default_rng(seed)
        m, _ = random_symmetric(rng, dim, -50, 50)
        dec = sym_eig(m)
        q = dec.eigenvectors
        assert rel_err(dec.reconstruct(), m) <= 1e-10
        assert np.max(np.abs(q.T @ q - np.eye(dim))) <= 1e-10

    def test_batched(self):
        rng = np.random.default_rng(2)
        stack = np.stack([random_symmetric(rng, 3, -5, 5)[0] for _ in range(4)])
        dec = sym_eig(stack)
        for i in range(4):
            single = sym_eig(stack[i])
            np.testing.assert_allclose(dec.eigenvalues[i], single.eigenvalues, rtol=1e-13)
            np.testing.assert_allclose(dec.eigenvectors[i], single.eigenvectors, atol=1e-12)


class TestPhi1Sym:
    def test_zero_matrix(self):
        np.testing.assert_array_equal(phi1_sym(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        out = phi1_sym(np.diag([1.0, -2.0]))
        np.testing.assert_allclose(out, np.diag([PHI1_AT_1, PHI1_AT_MINUS_2]), rtol=1e-14, atol=1e-15)

    def test_singular_matrix_uses_series_limit(self):
        # rank one: phi1 acts as 1 on the null space
        v = np.array([1.0, 2.0]) / math.sqrt(5)
        m = 3.0 * np.outer(v, v)
        expected = np.eye(2) + (phi1_scalar(3.0) - 1.0) * np.outer(v, v)
        np.testing.assert_allclose(phi1_sym(m), expected, rtol=1e-13)

    @settings(max_examples=60, deadline=None)
    @given(dim=st.integers(1, 10), seed=st.integers(0, 2**32 - 1))
    def test_matches_expm_inverse_oracle(self, dim, seed):
        rng = np.random.default_rng(seed)
        m, lam = random_symmetric(rng, dim, 0.5, 8)
        m = m * rng.choice([-1.0, 1.0])
        assert rel_err(phi1_sym(m), phi1_direct(m)) <= 1e-9

    @settings(max_examples=60, deadline=None)
    @given(dim=st.integers(1, 10), seed=st.integers(0, 2**32 - 1))
    def test_spd_and_exponential_identity(self, dim, seed):
        rng = np.random.default_rng(seed)
        m, _ = random_symmetric(rng, dim, -50, 50)
        f = phi1_sym(m)
        np.testing.assert_allclose(f, f.T, rtol=0, atol=1e-12 * np.abs(f).max())
        # positive on every eigen-direction; with eigenvalues up to 50 the
        # dense matrix is too ill-conditioned (~1e20) for a numerical SPD test
        assert np.all(phi1_scalar(sym_eig(m).eigenvalues) > 0)
        assert rel_err(m @ f, expm_taylor(m) - np.eye(dim)) <= 1e-9

    @settings(max_examples=60, deadline=None)
    @given(dim=st.integers(1, 10), seed=st.integers(0, 2**32 - 1))
    def test_dense_result_is_spd(self, dim, seed):
        rng = np.random.default_rng(seed)
        m, _ = random_symmetric(rng, dim, -50, 20)
        f = phi1_sym(m)
        assert np.all(np.linalg.eigvalsh(f) > 0)
        spd_factor(f)

    def test_spectral_scaling_shares_decomposition(self):
        rng = np.random.default_rng(3)
        m, _ = random_symmetric(rng, 4, -3, 3)
        dec = sym_eig(m)
        np.testing.assert_allclose(phi1_spectral(dec, 0.7), phi1_sym(0.7 * m), rtol=1e-12)


class TestSpdFactor:
    def test_identity(self):
        lower, log_det = spd_factor(np.eye(3))
        np.testing.assert_array_equal(lower, np.eye(3))
        assert log_det == 0.0

    def test_diagonal(self):
        lower, log_det = spd_factor(np.diag([4.0, 9.0]))
        np.testing.assert_allclose(lower, np.diag([2.0, 3.0]))
        assert log_det == pytest.approx(math.log(36), rel=1e-15)

    def test_two_by_two_covariance(self):
        lower, log_det = spd_factor([[3.0, 2.0], [2.0, 3.0]])
        np.testing.assert_allclose(
            lower, [[math.sqrt(3), 0], [2 / math.sqrt(3), math.sqrt(5 / 3)]], rtol=1e-15
        )
        assert log_det == pytest.approx(math.log(5), rel=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(dim=st.integers(1, 10), seed=st.integers(0, 2**32 - 1))
    def test_round_trip(self, dim, seed):
        rng = np.random.default_rng(seed)
        s, lam = random_symmetric(rng, dim, 0.01, 100)
        lower, log_det = spd_factor(s)
        assert np.all(np.triu(lower, 1) == 0)
        assert rel_err(lower @ lower.T, s) <= 1e-10
        assert log_det == pytest.approx(np.sum(np.log(lam)), rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize("s", [np.diag([1.0, -1.0]), np.zeros((2, 2)), np.array([[1.0, np.inf], [np.inf, 1.0]])])
    def test_not_positive_definite(self, s):
        with pytest.raises(NotPositiveDefinite):
            spd_factor(s)
