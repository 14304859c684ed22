import numpy as np
import pytest

from cmarck.analysis import error_variance, residual_isi_term
from cmarck.channel import ChannelRealization, NoiseSpec, sample_channel, toeplitz_channel_matrix, transmit
from cmarck.equalizer import (
    CmaConfig,
    DivergenceError,
    InsufficientSamplesError,
    blocks,
    cma_run,
    estimate_snr,
    normalize_output,
    zf_equalize,
    zf_taps,
)
from cmarck.signals import build_constellation, draw_symbols

CH3 = ChannelRealization([1, 0, 0.9])


def aligned_symbols(rx, L, M, delay):
    """s(iL - 1 - delay) for every block, from the transmitted sequence."""
    return blocks(rx.symbols, L, M)[:, delay]


class TestBlocks:
    def test_layout_and_disjointness(self):
        x = np.arange(12)
        X = blocks(x, 4, 3)
        np.testing.assert_array_equal(X[0], [3, 2, 1, 0])
        np.testing.assert_array_equal(X[2], [11, 10, 9, 8])
        for a, b in zip(X[:-1], X[1:]):
            assert not set(a) & set(b)

    def test_insufficient(self):
        with pytest.raises(InsufficientSamplesError):
            blocks(np.zeros(10), 4, 3)
        with pytest.raises(InsufficientSamplesError):
            cma_run(np.zeros(10), CmaConfig(L=4, M=3), 0.1)


class TestCma:
    def test_constant_modulus_fixed_point(self, rng):
        s = draw_symbols(build_constellation("qam", 4), 4000, rng)
        run = cma_run(s, CmaConfig(), 0.0)
        w0 = CmaConfig().initial_taps()
        np.testing.assert_allclose(run.w_M, w0, atol=1e-12)
        np.testing.assert_allclose(run.y_eq, blocks(s, 20, 200)[:, 0], atol=1e-12)

    def test_update_identically_zero_for_bpsk(self, rng):
        s = draw_symbols(build_constellation("psk", 2), 4000, rng)
        run = cma_run(s, CmaConfig(), 0.0, store_taps=True)
        assert np.all(run.cost == 0)
        assert np.all(run.taps_history == CmaConfig().initial_taps())

    def test_gamma_hat_identity_channel(self, rng):
        c = build_constellation("qam", 4)
        for _ in range(100):
            rx = transmit(draw_symbols(c, 4000, rng), ChannelRealization([1]), NoiseSpec(0.01), rng)
            run = cma_run(rx.x, CmaConfig(L=20, M=200), 0.01)
            assert abs(10 * np.log10(run.gamma_hat) - 20) <= 1.5

    def test_gamma_clamped(self):
        run = cma_run(np.full(400, 1e-3 + 0j), CmaConfig(L=2, M=200), 10.0)
        assert run.gamma_raw < 0
        assert run.gamma_hat == 1e-3

    def test_divergence_guard(self, rng):
        x = 50 * draw_symbols(build_constellation("qam", 16), 4000, rng)
        with pytest.raises(DivergenceError) as info:
            cma_run(x, CmaConfig(mu=1e-2), 0.01)
        assert info.value.iteration >= 1

    def test_converges_on_mild_channel(self, rng):
        # large step and many updates: the output approaches a rotated, delayed 4-QAM symbol
        c = build_constellation("qam", 4)
        h = ChannelRealization([1, 0.3 - 0.2j, 0.1j])
        L, M = 8, 5000
        rx = transmit(draw_symbols(c, L * M + 2, rng), h, NoiseSpec(0.0))
        run = cma_run(rx.x, CmaConfig(L=L, M=M, mu=2e-3), 0.0)
        g = run.w_M.conj() @ toeplitz_channel_matrix(h, L)
        D = int(np.argmax(np.abs(g)))
        assert abs(abs(g[D]) - 1) < 0.05
        assert np.sum(np.abs(g) ** 2) - abs(g[D]) ** 2 < 0.01
        assert np.mean(run.cost[-500:]) < 0.02 < np.mean(run.cost[:50])

    def test_rotation_equivariance(self, rng):
        c = build_constellation("qam", 16)
        h = sample_channel("ch1", rng)
        s = draw_symbols(c, 4003, rng)
        noise = NoiseSpec.from_snr_db(15)
        rx = transmit(s, h, noise, np.random.default_rng(1))
        rot = np.exp(1j * np.pi / 3)
        rx_rot = transmit(s, ChannelRealization(rot * h.taps), noise, np.random.default_rng(1))
        # same noise sequence, rotated explicitly
        x_rot = rx_rot.x_clean + rot * (rx.x - rx.x_clean)
        a = cma_run(rx.x, CmaConfig(), noise.variance, store_taps=True)
        b = cma_run(x_rot, CmaConfig(), noise.variance, store_taps=True)
        np.testing.assert_allclose(b.taps_history, a.taps_history, rtol=0, atol=1e-12)
        np.testing.assert_allclose(b.y_eq, rot * a.y_eq, atol=1e-12)

    def test_expected_cost_decreases(self):
        # noise-free version of descent on average: CM cost of w_M vs w0 on fresh data
        c = build_constellation("qam", 16)
        failures = 0
        for seed in range(40):
            rng = np.random.default_rng(seed)
            h = sample_channel("ch1", rng)
            noise = NoiseSpec.from_snr_db(20)
            rx = transmit(draw_symbols(c, 4003, rng), h, noise, rng)
            run = cma_run(rx.x, CmaConfig(), noise.variance)
            fresh = transmit(draw_symbols(c, 20 * 5000 + 3, rng), h, noise, rng)
            X = blocks(fresh.x, 20, 5000)

            def J(w):
                return np.mean((np.abs(X @ w.conj()) ** 2 - 1) ** 2)

            failures += J(run.w_M) > J(CmaConfig().initial_taps())
        assert failures <= 0.05 * 40

    @pytest.mark.xfail(
        strict=True,
        reason="with mu=1e-4 the 50-sample window means are dominated by 16-QAM modulus "
        "spread; only about 60% of seeds show a decrease (the expected-cost version passes)",
    )
    def test_window_cost_decreases(self):
        c = build_constellation("qam", 16)
        ok = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            h = sample_channel("ch1", rng)
            rx = transmit(draw_symbols(c, 4003, rng), h, NoiseSpec.from_snr_db(20), rng)
            run = cma_run(rx.x, CmaConfig(), rx.noise_variance)
            ok += run.cost[-50:].mean() <= run.cost[:50].mean()
        assert ok >= 95

    @pytest.mark.xfail(
        strict=True,
        reason="200 updates at mu=1e-4 leave the CMA far from the truncated-ZF operating point "
        "the error model assumes; measured error power is about 5x the model",
    )
    def test_error_power_matches_model_ch3(self, rng):
        c = build_constellation("qam", 16)
        noise = NoiseSpec.from_snr_db(20)
        rx = transmit(draw_symbols(c, 4002, rng), CH3, noise, rng)
        run = cma_run(rx.x, CmaConfig(), noise.variance)
        zf = zf_taps(CH3, length=90)
        err = run.y_eq - aligned_symbols(rx, 20, 200, zf.delay) * np.exp(1j * zf.phase)
        model = error_variance(c, 1e-4, CH3, 20, noise.variance, L_zf=90).total
        assert np.mean(np.abs(err) ** 2) == pytest.approx(model, rel=0.2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CmaConfig(L=0)
        with pytest.raises(ValueError):
            CmaConfig(mu=0)
        with pytest.raises(ValueError):
            CmaConfig(L=3, w0=np.zeros(3))
        np.testing.assert_array_equal(CmaConfig(L=3, w0=[0, 1, 0]).initial_taps(), [0, 1, 0])


def test_normalize_output(rng):
    c = build_constellation("qam", 16)
    w = np.array([0.5, 0.1, 0])
    noise = 0.01
    y = 0.7 * draw_symbols(c, 200_000, rng) + np.sqrt(np.vdot(w, w).real * noise / 2) * (
        rng.standard_normal(200_000) + 1j * rng.standard_normal(200_000)
    )
    z = normalize_output(y, w, noise)
    assert np.mean(np.abs(z) ** 2) - np.vdot(w, w).real * noise / 0.49 == pytest.approx(1.0, abs=0.01)
    assert estimate_snr(y, w, noise) == pytest.approx(0.49 / (np.vdot(w, w).real * noise), rel=0.02)


class TestZf:
    def test_identity(self):
        zf = zf_taps(ChannelRealization([1]))
        np.testing.assert_array_equal(zf.taps[:1], [1])
        assert np.all(zf.taps[1:] == 0)
        assert zf.delay == 0 and zf.phase == 0 and not zf.approximate

    def test_ch3_series(self):
        zf = zf_taps(CH3, length=90)
        m = np.arange(45)
        np.testing.assert_allclose(zf.taps[0::2], (-0.9) ** m, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(zf.taps[1::2], 0)
        assert abs(zf.taps[88]) == pytest.approx(0.9**44, rel=1e-12)
        assert abs(zf.taps[88]) == pytest.approx(9.7e-3, abs=0.05e-3)
        assert zf.delay == 0 and zf.phase == 0

    def test_tolerance_sets_length(self):
        short = zf_taps(CH3, 1e-3)
        long = zf_taps(CH3, 1e-6)
        assert short.L_zf < long.L_zf
        tail = np.sum(np.abs(long.taps[-3:]) ** 2) / np.sum(np.abs(long.taps) ** 2)
        assert tail < 1e-6

    def test_complex_channel_response(self):
        h = ChannelRealization([0.8 + 0.3j, -0.2 + 0.1j, 0.05j])
        zf = zf_taps(h, 1e-10)
        g = zf.response(h)
        assert abs(g[0] - 1) < 1e-12
        assert np.sum(np.abs(g[1:]) ** 2) < 1e-8
        assert zf.delay == 0 and zf.phase == pytest.approx(0, abs=1e-12)

    def test_nonminimum_phase_fallback(self):
        h = ChannelRealization([0.3, 1.0, 0.2])
        zf = zf_taps(h, 1e-6, max_delay=19)
        assert zf.approximate
        g = zf.response(h)
        assert zf.delay <= 19
        assert abs(abs(g[zf.delay]) - 1) < 1e-3
        assert np.sum(np.abs(g) ** 2) - abs(g[zf.delay]) ** 2 < 1e-3

    def test_zf_equalize_identity(self, rng):
        s = draw_symbols(build_constellation("qam", 64), 400, rng)
        y = zf_equalize(s, zf_taps(ChannelRealization([1])), 20)
        np.testing.assert_allclose(y, blocks(s, 20, 20)[:, 0])

    def test_zf_equalize_ch3_long(self, rng):
        c = build_constellation("qam", 4)
        rx = transmit(draw_symbols(c, 90 * 200 + 2, rng), CH3, NoiseSpec(0.0))
        zf = zf_taps(CH3, length=90)
        y = zf_equalize(rx.x, zf, 90)
        assert np.mean(np.abs(y - aligned_symbols(rx, 90, 200, 0)) ** 2) <= 1e-3

    def test_zf_equalize_ch3_truncated(self, rng):
        c = build_constellation("qam", 4)
        M = 20_000
        rx = transmit(draw_symbols(c, 20 * M + 2, rng), CH3, NoiseSpec(0.0))
        zf = zf_taps(CH3, length=90)
        y = zf_equalize(rx.x, zf, 20, M)
        mse = np.mean(np.abs(y - aligned_symbols(rx, 20, M, 0)) ** 2)
        assert mse == pytest.approx(residual_isi_term(zf, 20, CH3), rel=0.25)
