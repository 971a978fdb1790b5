import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cn
from otfsprec import channel as chn
from otfsprec.errors import DimensionError, ParameterError
from otfsprec.modem import OtfsDims, add_cp, otfs_demodulate, otfs_modulate, remove_cp

GRIDS = [(1, 1), (1, 2), (2, 1), (2, 2), (4, 2), (2, 4), (4, 4), (1, 4), (4, 1)]


def pipeline_matrix(dims, apply):
    """Column-by-column image of unit vectors under demod(channel(mod(.)))."""
    eye = np.eye(dims.MN)
    return np.stack([otfs_demodulate(apply(otfs_modulate(e, dims)), dims) for e in eye], axis=1)


def circulant_oracle(taps, s):
    n = len(s)
    return np.array([sum(taps[p] * s[(c - p) % n] for p in range(len(taps))) for c in range(n)])


class TestDoppler:
    def test_velocity_500(self):
        dims = OtfsDims(2, 4)
        f = chn.doppler_from_velocity(500)
        assert f == pytest.approx(1851.851851851852, rel=1e-12)
        assert f / 15e3 == pytest.approx(0.12345679012345678, rel=1e-12)
        assert chn.bem_order(dims, f) == 2

    def test_velocity_120(self):
        f = chn.doppler_from_velocity(120)
        assert f == pytest.approx(444.44444444444446, rel=1e-12)
        # N * fbar = 0.1185..., still rounds up to one
        assert chn.bem_order(OtfsDims(2, 4), f) == 2

    def test_static(self, rng):
        dims = OtfsDims(2, 2)
        ch = chn.sample_bem(dims, 0.0, 15e3, rng)
        assert ch.Q == 0 and ch.omegas.tolist() == [0.0]
        g = ch.gains()
        np.testing.assert_allclose(g, g[0])

    def test_omegas(self):
        np.testing.assert_allclose(chn.bem_omegas(8, 2), [-np.pi / 4, 0, np.pi / 4], atol=1e-15)
        np.testing.assert_allclose(chn.bem_omegas(4, 3), [-np.pi, -np.pi / 2, 0, np.pi / 2], atol=1e-15)

    def test_bad_spacing(self):
        with pytest.raises(ParameterError):
            chn.bem_order(OtfsDims(2, 2), 100.0, 0.0)

    def test_scenario_from_doppler(self):
        sc = chn.TimeSelective.from_doppler(OtfsDims(2, 4), 1851.85)
        assert sc.Q == 2 and sc.max_diversity == 3 and sc.family == "bem"


class TestSampling:
    def test_zero_taps(self, rng):
        with pytest.raises(DimensionError):
            chn.sample_fir(0, rng)

    def test_seeded(self):
        a = chn.sample_fir(3, np.random.default_rng(9)).taps
        b = chn.sample_fir(3, np.random.default_rng(9)).taps
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("L", [1, 4])
    def test_fir_energy(self, L):
        rng = np.random.default_rng(L)
        e = np.mean([np.sum(np.abs(chn.sample_fir(L, rng).taps) ** 2) for _ in range(100_000)])
        assert abs(e - 1) < 0.02

    def test_bem_energy(self):
        rng = np.random.default_rng(3)
        dims = OtfsDims(2, 4)
        e = np.mean([np.mean(np.abs(chn.sample_bem_order(dims, 2, rng).gains()) ** 2) for _ in range(100_000)])
        assert abs(e - 1) < 0.02


class TestApply:
    def test_flat(self, rng):
        s = cn(rng, 5)
        np.testing.assert_array_equal(chn.apply_fir(chn.FirChannel(np.array([1.0 + 0j])), s), s)

    def test_delay(self):
        r = chn.apply_fir(chn.FirChannel(np.array([0, 1], complex)), [1, 0, 0, 0])
        assert r.real.tolist() == [0, 1, 0, 0]

    def test_too_long(self):
        with pytest.raises(DimensionError):
            chn.apply_fir(chn.FirChannel(np.ones(5, complex)), np.ones(4))

    def test_circulant_oracle(self, rng):
        h, s = cn(rng, 3), cn(rng, 7)
        np.testing.assert_allclose(chn.apply_fir(chn.FirChannel(h), s), circulant_oracle(h, s), atol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(6, 16), st.integers(0, 2**32 - 1))
    def test_cp_makes_linear_circular(self, L, n, seed):
        rng = np.random.default_rng(seed)
        h, s = cn(rng, L), cn(rng, n)
        lin = remove_cp(chn.linear_convolve(h, add_cp(s, L - 1)), L - 1)
        np.testing.assert_allclose(lin, chn.apply_fir(chn.FirChannel(h), s), atol=1e-12)

    def test_linear_convolve_batched(self, rng):
        H, S = cn(rng, 4, 3), cn(rng, 4, 9)
        out = chn.linear_convolve(H, S)
        for i in range(4):
            np.testing.assert_allclose(out[i], np.convolve(H[i], S[i])[:9], atol=1e-14)

    def test_bem_scalar(self, rng):
        dims = OtfsDims(2, 2)
        s = cn(rng, 4)
        one = chn.BemChannel(np.array([1.0 + 0j]), np.zeros(1), dims)
        np.testing.assert_allclose(chn.apply_bem(one, s), s)
        two_j = chn.BemChannel(np.array([2j]), np.zeros(1), dims)
        np.testing.assert_allclose(chn.apply_bem(two_j, s), 2j * s)


class TestEffectiveMatrices:
    def test_flat_is_identity(self):
        for M, N in GRIDS:
            dims = OtfsDims(M, N)
            I = np.eye(dims.MN)
            np.testing.assert_allclose(chn.effective_matrix_fir(chn.FirChannel(np.array([1.0 + 0j])), dims), I, atol=1e-13)
            bem = chn.BemChannel(np.array([1.0 + 0j]), np.zeros(1), dims)
            np.testing.assert_allclose(chn.effective_matrix_bem(bem, dims), I, atol=1e-13)

    def test_l_too_large(self):
        with pytest.raises(DimensionError):
            chn.effective_matrix_fir(chn.FirChannel(np.ones(5, complex)), OtfsDims(2, 2))

    @pytest.mark.parametrize("M,N", GRIDS)
    def test_fir_oracle(self, rng, M, N):
        dims = OtfsDims(M, N)
        for _ in range(100):
            ch = chn.sample_fir(int(rng.integers(1, dims.MN + 1)), rng)
            x = cn(rng, dims.MN)
            lhs = chn.effective_matrix_fir(ch, dims) @ x
            assert np.linalg.norm(lhs - otfs_demodulate(chn.apply_fir(ch, otfs_modulate(x, dims)), dims)) <= 1e-9
        np.testing.assert_allclose(chn.effective_matrix_fir(ch, dims),
                                   pipeline_matrix(dims, lambda s: chn.apply_fir(ch, s)), atol=1e-12)

    @pytest.mark.parametrize("M,N", GRIDS)
    def test_bem_oracle(self, rng, M, N):
        dims = OtfsDims(M, N)
        for _ in range(100):
            ch = chn.sample_bem_order(dims, int(rng.integers(0, 5)), rng)
            x = cn(rng, dims.MN)
            lhs = chn.effective_matrix_bem(ch, dims) @ x
            assert np.linalg.norm(lhs - otfs_demodulate(chn.apply_bem(ch, otfs_modulate(x, dims)), dims)) <= 1e-9
        np.testing.assert_allclose(chn.effective_matrix_bem(ch, dims),
                                   pipeline_matrix(dims, lambda s: chn.apply_bem(ch, s)), atol=1e-12)

    def test_bem_trace_geometric_sums(self, rng):
        dims = OtfsDims(2, 4)
        ch = chn.sample_bem_order(dims, 2, rng)
        c = np.arange(dims.MN)
        want = sum(cq * np.sum(np.exp(1j * wq * c)) for cq, wq in zip(ch.coeffs, ch.omegas))
        assert np.trace(chn.effective_matrix_bem(ch, dims)) == pytest.approx(want, abs=1e-12)
        # only the zero frequency survives a full period
        assert want == pytest.approx(dims.MN * ch.coeffs[1], abs=1e-12)


class TestSpectralForms:
    @pytest.mark.parametrize("M,N", [(2, 2), (4, 2), (3, 4)])
    def test_fir(self, rng, M, N):
        dims = OtfsDims(M, N)
        ch = chn.sample_fir(3, rng)
        U = chn.fir_basis(dims)
        np.testing.assert_allclose(U.conj().T @ U, np.eye(dims.MN), atol=1e-13)
        H = U @ np.diag(chn.fir_spectrum(ch.taps, dims.MN)) @ U.conj().T
        np.testing.assert_allclose(H, chn.effective_matrix_fir(ch, dims), atol=1e-12)
        y = cn(rng, dims.MN)
        np.testing.assert_allclose(chn.fir_to_spectral(y, dims), U.conj().T @ y, atol=1e-13)
        np.testing.assert_allclose(chn.fir_from_spectral(y, dims), U @ y, atol=1e-13)

    @pytest.mark.parametrize("M,N", [(2, 2), (2, 4), (3, 4)])
    def test_bem(self, rng, M, N):
        dims = OtfsDims(M, N)
        ch = chn.sample_bem_order(dims, 2, rng)
        U = chn.bem_basis(dims)
        H = U @ np.diag(ch.gains()) @ U.conj().T
        np.testing.assert_allclose(H, chn.effective_matrix_bem(ch, dims), atol=1e-12)
        y = cn(rng, dims.MN)
        np.testing.assert_allclose(chn.bem_to_spectral(y, dims), U.conj().T @ y, atol=1e-13)
        np.testing.assert_allclose(chn.bem_from_spectral(y, dims), U @ y, atol=1e-13)

    def test_csv_rows(self):
        rows = chn.channel_csv_rows(chn.FirChannel(np.array([1 + 2j, -0.5j])))
        assert rows == [(0, 1.0, 2.0), (1, 0.0, -0.5)]
