import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from fmf.errors import InputError
from fmf.factorization import energy_profile, hour_embedding, rank_for_energy, truncated_svd


def principal_angle_max(P, Q):
    s = np.linalg.svd(P.T @ Q, compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))


class TestTruncatedSvd:
    def test_identity(self):
        svd = truncated_svd(np.eye(5), energy=1.0)
        assert svd.d == 5
        np.testing.assert_array_equal(svd.sigma, np.ones(5))
        np.testing.assert_allclose(svd.reconstruct(), np.eye(5), atol=1e-15)

    def test_rank_one(self, rng):
        u, v = rng.random(7), rng.random(4)
        A = np.outer(u, v)
        svd = truncated_svd(A, energy=0.9)
        assert svd.d == 1
        assert svd.sigma[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v), rel=1e-13)
        np.testing.assert_allclose(svd.reconstruct(), A, atol=1e-14)

    def test_matches_jacobi_oracle(self, rng):
        A = rng.standard_normal((20, 12))
        ref, V_ref = oracles.jacobi_svd(A)
        svd = truncated_svd(A, d=12)
        np.testing.assert_allclose(svd.sigma, ref, rtol=1e-8)
        # Subspace agreement for a non-degenerate spectrum.
        for k in (1, 3, 6):
            assert principal_angle_max(svd.V[:, :k], V_ref[:, :k]) <= 1e-6

    @pytest.mark.parametrize("shape,d", [((400, 303), 300), ((400, 37), 34)])
    def test_fixed_d_configs(self, rng, shape, d):
        svd = truncated_svd(rng.random(shape), d=d)
        assert svd.d == d and svd.U.shape == (shape[0], d) and svd.V.shape == (shape[1], d)

    def test_energy_rule_is_minimal(self, rng):
        A = rng.standard_normal((60, 15)) @ np.diag(np.geomspace(10, 0.01, 15))
        s = np.linalg.svd(A, compute_uv=False)
        frac = np.cumsum(s**2) / np.sum(s**2)
        for tau in (0.5, 0.9, 0.99, 0.999):
            d = truncated_svd(A, energy=tau).d
            assert frac[d - 1] >= tau
            assert d == 1 or frac[d - 2] < tau

    def test_default_energy(self, rng):
        A = rng.random((50, 10))
        assert truncated_svd(A).energy_fraction >= 0.99

    def test_orthonormal_columns(self, rng):
        svd = truncated_svd(rng.random((80, 20)), d=10)
        assert np.max(np.abs(svd.U.T @ svd.U - np.eye(10))) <= 1e-8
        assert np.max(np.abs(svd.V.T @ svd.V - np.eye(10))) <= 1e-8

    def test_sign_convention(self, rng):
        svd = truncated_svd(rng.standard_normal((30, 8)), d=8)
        rows = np.argmax(np.abs(svd.U), axis=0)
        assert np.all(svd.U[rows, np.arange(8)] > 0)

    def test_eckart_young_spot_check(self, rng):
        A = rng.random((40, 12))
        d = 4
        best = np.linalg.norm(A - truncated_svd(A, d=d).reconstruct())
        for _ in range(100):
            L = rng.standard_normal((40, d))
            # Least-squares right factor: the best rank-d fit with this left factor.
            R = np.linalg.lstsq(L, A, rcond=None)[0]
            assert best <= np.linalg.norm(A - L @ R) + 1e-12

    def test_randomized_close_to_exact(self, rng):
        A = rng.standard_normal((300, 40)) @ np.diag(np.geomspace(50, 0.1, 40))
        exact = truncated_svd(A, d=10)
        fast = truncated_svd(A, d=10, method="randomized", seed=3)
        np.testing.assert_allclose(fast.sigma, exact.sigma, rtol=1e-6)
        fast_e = truncated_svd(A, energy=0.99, method="randomized")
        assert fast_e.energy_fraction >= 0.99

    @pytest.mark.parametrize(
        "A,kwargs",
        [(np.array([[1.0, np.nan]]), {}), (np.zeros((0, 3)), {}), (np.eye(3), {"energy": 1.5}),
         (np.eye(3), {"energy": 0.0}), (np.eye(3), {"d": 4}), (np.eye(3), {"d": 2, "energy": 0.9}),
         (np.eye(3), {"method": "lanczos"})],
    )
    def test_errors(self, A, kwargs):
        with pytest.raises(InputError):
            truncated_svd(A, **kwargs)


class TestHourEmbedding:
    def test_identity(self):
        H = hour_embedding(truncated_svd(np.eye(4), energy=1.0)).H
        np.testing.assert_array_equal(H, np.eye(4))

    def test_d1(self, rng):
        svd = truncated_svd(rng.random((10, 5)), d=1)
        np.testing.assert_array_equal(hour_embedding(svd).H[:, 0], svd.U[:, 0] * svd.sigma[0])

    def test_exact_product(self, rng):
        svd = truncated_svd(rng.random((30, 9)), d=5)
        assert np.array_equal(hour_embedding(svd).H, svd.U * svd.sigma)

    def test_residual_equals_lost_energy(self, rng):
        A = rng.random((50, 12))
        for d in (1, 3, 7, 12):
            svd = truncated_svd(A, d=d)
            H = hour_embedding(svd).H
            resid = np.linalg.norm(H @ svd.V.T - A) ** 2 / np.linalg.norm(A) ** 2
            assert resid == pytest.approx(1.0 - svd.energy_fraction, abs=1e-8)


class TestEnergyProfile:
    def test_identity(self):
        assert [f for _, f in energy_profile(np.eye(4))] == [0.25, 0.5, 0.75, 1.0]

    def test_rank_one(self):
        prof = energy_profile(np.outer([1.0, 2.0, 3.0], [1.0, 1.0]))
        assert prof[0] == (1, pytest.approx(1.0, abs=1e-15))

    def test_matches_oracle(self, rng):
        A = rng.standard_normal((30, 10))
        sigma, _ = oracles.jacobi_svd(A)
        expected = oracles.cumulative_energy(sigma)
        np.testing.assert_allclose([f for _, f in energy_profile(A)], expected, rtol=0, atol=1e-8)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 25), st.integers(1, 15))
    def test_monotone_and_ends_at_one(self, seed, m, n):
        A = np.random.default_rng(seed).standard_normal((m, n))
        frac = [f for _, f in energy_profile(A)]
        assert all(b >= a for a, b in zip(frac, frac[1:]))
        assert frac[-1] == 1.0

    def test_rank_for_energy_bounds(self):
        with pytest.raises(InputError):
            rank_for_energy([1.0, 0.5], 0.0)
        assert rank_for_energy([1.0, 1.0, 1.0], 1.0) == 3
        assert rank_for_energy([0.0, 0.0], 0.5) == 1
