import numpy as np
import pytest

from isac_shield.channel import Target, TargetSet, phase_grid, sensing_channel_grid
from isac_shield.receiver import (
    FilterKind,
    SingularFilterError,
    estimate_channel,
    filter_response,
    per_bin_filter,
    process,
    response_grid,
    to_rd_map,
)


def crand(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def unit_modulus(rng, M=8, N=8):
    return np.exp(2j * np.pi * rng.random((M, N)))


def rd_direct(h):
    """Explicit double sum for the RD transform."""
    M, N = h.shape
    out = np.zeros((M, N), dtype=complex)
    for l in range(M):
        for k in range(N):
            acc = 0j
            for m in range(M):
                for n in range(N):
                    acc += h[m, n] * np.exp(2j * np.pi * (m * l / M - n * k / N))
            out[l, k] = acc / np.sqrt(M * N)
    return out


class TestPerBinFilter:
    def test_mf_unit_modulus(self):
        x = unit_modulus(np.random.default_rng(0))
        g = per_bin_filter(x, FilterKind.MF)
        np.testing.assert_array_equal(g, x.conj())
        np.testing.assert_allclose(np.abs(g), 1.0)

    def test_lmmse_tends_to_zf(self):
        rng = np.random.default_rng(1)
        x = crand(rng, 8, 8)
        x = np.where(np.abs(x) < 0.1, 0.1, x)
        diff = per_bin_filter(x, "lmmse", 1e-9) - per_bin_filter(x, "zf")
        assert np.max(np.abs(diff)) < 1e-6

    def test_lmmse_tends_to_mf_direction(self):
        x = crand(np.random.default_rng(2), 8, 8)
        g = per_bin_filter(x, "lmmse", 1e9).ravel()
        mf = x.conj().ravel()
        cos = abs(np.vdot(g, mf)) / (np.linalg.norm(g) * np.linalg.norm(mf))
        assert cos == pytest.approx(1.0, abs=1e-9)

    def test_zf_is_inverse_and_rf_alias(self):
        x = crand(np.random.default_rng(3), 4, 4)
        np.testing.assert_allclose(per_bin_filter(x, "zf") * x, 1.0, atol=1e-13)
        np.testing.assert_array_equal(per_bin_filter(x, "rf"), per_bin_filter(x, "zf"))

    def test_zf_zero_bin(self):
        x = np.ones((4, 4), dtype=complex)
        x[1, 2] = 0
        with pytest.raises(SingularFilterError):
            per_bin_filter(x, "zf")

    def test_lmmse_zero_bin_zero_noise(self):
        with pytest.raises(SingularFilterError):
            per_bin_filter(np.zeros((2, 2)), "lmmse", 0.0)


class TestEstimateChannel:
    def test_ones_filter(self):
        r = crand(np.random.default_rng(0), 4, 4)
        np.testing.assert_array_equal(estimate_channel(r, np.ones((4, 4))), r)

    def test_zf_recovers_channel(self):
        rng = np.random.default_rng(1)
        x = crand(rng, 8, 8)
        h = sensing_channel_grid([Target(1, 2, 3)], [0.4 - 0.2j], 8, 8)
        np.testing.assert_allclose(estimate_channel(h * x, per_bin_filter(x, "zf")), h, atol=1e-12)

    def test_elementwise_oracle(self):
        rng = np.random.default_rng(2)
        r, g = crand(rng, 3, 5), crand(rng, 3, 5)
        out = estimate_channel(r, g)
        for m in range(3):
            for n in range(5):
                assert out[m, n] == pytest.approx(g[m, n] * r[m, n], rel=1e-14)


class TestRdMap:
    @pytest.mark.parametrize("M,N", [(4, 4), (8, 8), (3, 5)])
    def test_all_ones_is_dc_impulse(self, M, N):
        rd = to_rd_map(np.ones((M, N)))
        expect = np.zeros((M, N))
        expect[0, 0] = np.sqrt(M * N)
        np.testing.assert_allclose(rd, expect, atol=1e-12)

    def test_single_target_after_zf(self):
        rng = np.random.default_rng(4)
        x = unit_modulus(rng)
        h = sensing_channel_grid([Target(1, 3, 5)], [1.0], 8, 8)
        rd = process(h * x, x, "zf")
        expect = np.zeros((8, 8))
        expect[3, 5] = 8.0
        np.testing.assert_allclose(rd, expect, atol=1e-12)

    def test_direct_sum_oracle(self):
        h = crand(np.random.default_rng(5), 4, 4)
        np.testing.assert_allclose(to_rd_map(h), rd_direct(h), atol=1e-10)

    def test_parseval_100_grids(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            h = crand(rng, 8, 8)
            e_tf = np.sum(np.abs(h) ** 2)
            assert np.sum(np.abs(to_rd_map(h)) ** 2) == pytest.approx(e_tf, rel=1e-9)

    def test_shift_theorem(self):
        rng = np.random.default_rng(7)
        h = crand(rng, 8, 8)
        l0, k0 = 3, 6
        shifted = to_rd_map(h * phase_grid(l0, k0, 8, 8))
        np.testing.assert_allclose(shifted, np.roll(to_rd_map(h), (l0, k0), axis=(0, 1)), atol=1e-12)

    def test_linear_in_received_grid(self):
        rng = np.random.default_rng(8)
        x, r1, r2 = crand(rng, 8, 8), crand(rng, 8, 8), crand(rng, 8, 8)
        lhs = process(r1 + 2j * r2, x, "mf")
        np.testing.assert_allclose(lhs, process(r1, x, "mf") + 2j * process(r2, x, "mf"), atol=1e-12)


class TestFilterResponse:
    def test_constant_modulus_mf_impulse(self):
        x = unit_modulus(np.random.default_rng(0))
        resp = filter_response(x, "mf")
        assert abs(resp[0, 0]) == pytest.approx(8.0)
        side = np.abs(resp).copy()
        side[0, 0] = 0
        assert side.max() < 1e-12

    def test_dc_term(self):
        x = crand(np.random.default_rng(1), 8, 8)
        gamma = np.abs(x) ** 2 / (np.abs(x) ** 2 + 0.3)
        assert filter_response(x, "lmmse", 0.3)[0, 0] == pytest.approx(gamma.sum() / 8)

    def test_energy(self):
        x = crand(np.random.default_rng(2), 8, 8)
        gamma = np.abs(x) ** 2
        assert np.sum(np.abs(filter_response(x, "mf")) ** 2) == pytest.approx(np.sum(gamma**2), rel=1e-12)
        np.testing.assert_allclose(response_grid(x, "mf"), gamma, atol=1e-14)

    def test_decomposition_of_noise_free_map(self):
        # full LMMSE map equals the sum of shifted unit responses
        rng = np.random.default_rng(3)
        x = crand(rng, 8, 8)
        ts = [Target(1, 1, 1), Target(1, 5, 3), Target(1, 3, 6)]
        alphas = crand(rng, 3)
        h = sensing_channel_grid(ts, alphas, 8, 8)
        rd = process(h * x, x, "lmmse", 0.05)
        resp = filter_response(x, "lmmse", 0.05)
        recon = sum(a * np.roll(resp, (t.l, t.k), axis=(0, 1)) for t, a in zip(ts, alphas))
        np.testing.assert_allclose(rd, recon, atol=1e-9)
        # desired term alone equals its mainlobe shift
        ts_set = TargetSet(tuple(ts), tuple(ts), 0)
        assert ts_set.side("bs")[0] is ts[0]
