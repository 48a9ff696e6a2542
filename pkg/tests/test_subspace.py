import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bayesattack.subspace import (
    BasisMode,
    SubspaceSpec,
    conjugate_orbits,
    dft2,
    embed,
    fft_embed,
    fourier_spectrum,
    idft2,
    nni_upsample,
    project_l2,
    project_linf,
)

from conftest import naive_dft2

finite = st.floats(-1e3, 1e3, allow_nan=False)


class TestTransforms:
    def test_constant_image(self):
        X = dft2(np.full((2, 2), 0.7))
        assert X[0, 0] == pytest.approx(1.4)
        X[0, 0] = 0
        assert np.abs(X).max() < 1e-15

    def test_single_dc_bin_inverts_to_ones(self):
        X = np.zeros((5, 5), dtype=complex)
        X[0, 0] = 5
        np.testing.assert_allclose(idft2(X), np.ones((5, 5)), atol=1e-14)

    def test_naive_oracle(self, rng):
        x = rng.standard_normal((8, 8))
        np.testing.assert_allclose(dft2(x), naive_dft2(x), atol=1e-10)
        Z = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        np.testing.assert_allclose(idft2(Z), naive_dft2(Z, inverse=True), atol=1e-10)

    def test_norm_preserved(self, rng):
        for _ in range(100):
            d = rng.integers(1, 20)
            x = rng.standard_normal((d, d))
            assert np.linalg.norm(dft2(x)) == pytest.approx(np.linalg.norm(x), rel=1e-9)

    @pytest.mark.parametrize("d", [1, 16, 28, 33, 64])
    def test_round_trip(self, rng, d):
        x = rng.standard_normal((d, d))
        np.testing.assert_allclose(idft2(dft2(x)).real, x, atol=1e-9)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            dft2(np.zeros((3, 4)))


class TestSpec:
    def test_dims(self):
        assert SubspaceSpec("nni", 5, 3, 17).dim == 75
        assert SubspaceSpec("fft_cos", 4, 3, 16).dim == 48
        # the DC bin has no sine component, so one slot fewer per channel
        assert SubspaceSpec("fft_sin", 4, 3, 16).dim == 45
        assert SubspaceSpec("fft_full", 4, 3, 16).dim == 93

    def test_bad_low_dim(self):
        with pytest.raises(ValueError):
            SubspaceSpec("nni", 0, 1, 8)
        with pytest.raises(ValueError):
            SubspaceSpec("nni", 9, 1, 8)

    def test_empty_sine_space_rejected(self):
        for k, d in ((1, 8), (2, 2)):
            with pytest.raises(ValueError, match="no free coefficients"):
                SubspaceSpec("fft_sin", k, 1, d)
        assert SubspaceSpec("fft_cos", 1, 1, 8).dim == 1

    def test_large_square_folds_mirrors(self):
        # with k = d every bin's mirror is also in the square
        bins, mirrors, self_conj = conjugate_orbits(4, 4)
        assert len(bins) == 10  # 16 bins: 4 self-conjugate + 6 pairs
        assert self_conj.sum() == 4
        assert SubspaceSpec("fft_full", 4, 1, 4).dim == 16


class TestFFTEmbed:
    def test_zero(self):
        spec = SubspaceSpec("fft_full", 3, 2, 8)
        np.testing.assert_array_equal(fft_embed(np.zeros(spec.dim), spec), 0)

    def test_dc_only(self):
        spec = SubspaceSpec("fft_cos", 3, 2, 8)
        c = np.zeros(spec.dim)
        c[0] = -2.5
        out = fft_embed(c, spec)
        np.testing.assert_allclose(out[0], np.full((8, 8), -2.5 / 8), atol=1e-15)
        np.testing.assert_allclose(out[1], 0, atol=1e-15)
        assert np.linalg.norm(out) == pytest.approx(2.5)

    @pytest.mark.parametrize("mode", ["fft_full", "fft_cos", "fft_sin"])
    def test_isometry_and_realness(self, rng, mode):
        spec = SubspaceSpec(mode, 4, 3, 16)
        c = rng.standard_normal(spec.dim)
        X = fourier_spectrum(c, spec)
        for ch in range(3):
            # independent check: naive inverse of the built spectrum is real
            assert np.abs(naive_dft2(X[ch], inverse=True).imag).max() < 1e-12
        out = fft_embed(c, spec)
        assert out.dtype == np.float64 and out.shape == (3, 16, 16)
        assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(c), rel=1e-9)

    @pytest.mark.parametrize("d,k", [(4, 4), (5, 5), (7, 4), (6, 3)])
    def test_isometry_when_mirrors_overlap(self, rng, d, k):
        spec = SubspaceSpec("fft_full", k, 1, d)
        c = rng.standard_normal(spec.dim)
        assert np.linalg.norm(fft_embed(c, spec)) == pytest.approx(np.linalg.norm(c), rel=1e-9)

    def test_linear(self, rng):
        spec = SubspaceSpec("fft_full", 3, 2, 10)
        c1, c2 = rng.standard_normal((2, spec.dim))
        np.testing.assert_allclose(
            fft_embed(2.0 * c1 - 0.5 * c2, spec),
            2.0 * fft_embed(c1, spec) - 0.5 * fft_embed(c2, spec), atol=1e-9,
        )

    def test_high_frequencies_empty(self, rng):
        d, k = 12, 3
        spec = SubspaceSpec("fft_full", k, 1, d)
        spectrum = dft2(fft_embed(rng.standard_normal(spec.dim), spec)[0])
        allowed = np.zeros((d, d), bool)
        allowed[:k, :k] = True
        allowed |= np.roll(np.flip(allowed, (0, 1)), (1, 1), (0, 1))
        assert np.abs(spectrum[~allowed]).max() <= 1e-9

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            fft_embed(np.zeros(5), SubspaceSpec("fft_cos", 3, 1, 8))


class TestNNI:
    def test_block_replication(self):
        spec = SubspaceSpec("nni", 2, 1, 4)
        out = nni_upsample([1, 2, 3, 4], spec)
        np.testing.assert_array_equal(
            out[0], [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
        )

    def test_identity(self, rng):
        spec = SubspaceSpec("nni", 6, 2, 6)
        c = rng.standard_normal(spec.dim)
        np.testing.assert_array_equal(nni_upsample(c, spec), c.reshape(2, 6, 6))

    def test_non_divisible(self, rng):
        spec = SubspaceSpec("nni", 5, 1, 17)
        c = rng.standard_normal(25)
        out = nni_upsample(c, spec)[0]
        low = c.reshape(5, 5)
        for i in range(17):
            for j in range(17):
                assert out[i, j] == low[i * 5 // 17, j * 5 // 17]
        assert set(out.ravel()) <= set(c)
        assert np.abs(out).max() == np.abs(c).max()

    def test_embed_dispatch(self, rng):
        spec = SubspaceSpec(BasisMode.NNI, 2, 1, 4)
        np.testing.assert_array_equal(embed([1, 2, 3, 4], spec), nni_upsample([1, 2, 3, 4], spec))

    def test_wrong_mode(self):
        with pytest.raises(ValueError):
            nni_upsample(np.zeros(4), SubspaceSpec("fft_cos", 2, 1, 4))


class TestProjections:
    def test_linf_clamp(self):
        np.testing.assert_allclose(project_linf([0.2, -0.1], 0.05), [0.05, -0.05])
        np.testing.assert_array_equal(project_linf([0.01, -0.02], 0.05), [0.01, -0.02])

    def test_l2_examples(self):
        np.testing.assert_allclose(project_l2([3.0, 4.0], 2.5), [1.5, 2.0])
        np.testing.assert_array_equal(project_l2([3.0, 4.0], 10), [3.0, 4.0])

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            project_l2([1.0], 0.0)
        with pytest.raises(ValueError):
            project_linf([1.0], -1.0)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.integers(1, 30), elements=finite), st.floats(1e-3, 1e2))
    def test_properties(self, c, eps):
        for proj, order in ((project_linf, np.inf), (project_l2, 2)):
            p = proj(c, eps)
            assert np.linalg.norm(p, order) <= eps * (1 + 1e-12) + 1e-12
            np.testing.assert_allclose(proj(p, eps), p, rtol=1e-12, atol=1e-15)

    def test_l2_matches_constrained_minimizer(self, rng):
        from scipy.optimize import minimize

        for _ in range(10):
            c = rng.standard_normal(6) * 2
            eps = 1.0
            res = minimize(lambda y: np.sum((y - c) ** 2), np.zeros(6), method="SLSQP",
                           constraints=[{"type": "ineq", "fun": lambda y: eps**2 - y @ y}],
                           options={"ftol": 1e-14, "maxiter": 500})
            np.testing.assert_allclose(project_l2(c, eps), res.x, atol=1e-6)
