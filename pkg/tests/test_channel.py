"""Tests for the impaired-link stages and the GN-model budget."""

import math

import numpy as np
import pytest

from pcslink.channel import (
    ImpairmentConfig,
    LinkConfig,
    Span,
    add_ase,
    apply_cd,
    beta2_s2_per_km,
    calibrate_eta,
    dwdm_link,
    field_trial_link,
    gn_link_snr,
    image_rejection_ratio_db,
    iq_impair,
    optimal_launch,
    phase_noise,
    polarization_rotate,
    random_polarization,
)
from pcslink.constellation import apply_maxwell_boltzmann, build_qam
from pcslink.txdsp import SignalBlock, map_symbols, matched_filter, rrc_shape


def qpsk_block(seed=0, n=8192, sample_rate=260e9):
    rng = np.random.default_rng(seed)
    s = apply_maxwell_boltzmann(build_qam(4), 0.0)
    idx = rng.integers(0, 4, size=(2, n))
    syms = np.stack([map_symbols(idx[0], s), map_symbols(idx[1], s)])
    return syms, rrc_shape(syms, 0.1, 2, sample_rate=sample_rate)


class TestLinkConfig:
    def test_span_validation(self):
        with pytest.raises(ValueError):
            Span(-1.0, 20.0)
        with pytest.raises(ValueError):
            Span(50.0, -3.0)

    def test_field_links(self):
        link = field_trial_link(3)
        assert link.total_length_km == pytest.approx(3 * 61.3)
        assert dwdm_link().spans[0].attenuation_db == 23.0

    def test_ase_power_accumulates_per_span(self):
        one = field_trial_link(1).ase_power_w()
        three = field_trial_link(3).ase_power_w()
        assert three == pytest.approx(3 * one)


class TestChromaticDispersion:
    def test_zero_length_identity(self):
        _, blk = qpsk_block(n=512)
        link = LinkConfig(spans=())
        assert apply_cd(blk, link) is blk

    def test_unitary(self):
        _, blk = qpsk_block(n=2048)
        out = apply_cd(blk, dwdm_link())
        np.testing.assert_allclose(out.power(), blk.power(), rtol=1e-9)

    def test_roundtrip_evm(self):
        syms, blk = qpsk_block()
        out = apply_cd(apply_cd(blk, dwdm_link()), dwdm_link(), sign=-1.0)
        rec = matched_filter(out, 0.1)
        evm = 10 * np.log10(np.mean(np.abs(rec - syms) ** 2))
        assert evm < -40.0

    def test_group_delay_shift_matches_analytic(self):
        """Narrowband pulse at +f0 shifts by beta2 L 2*pi*f0 (envelope centroid)."""
        fs = 260e9
        n = 2**15
        f0 = 40e9
        link = LinkConfig(spans=tuple(Span(96.5, 23.0) for _ in range(4)))
        env = np.exp(-0.5 * ((np.arange(n) - n // 2) / (n / 128)) ** 2)
        pulse = env * np.exp(2j * math.pi * f0 * np.arange(n) / fs)
        blk = SignalBlock(np.stack([pulse, np.zeros_like(pulse)]), fs, 2.0)
        out = apply_cd(blk, link)

        def centroid(x):
            mag = np.abs(x) ** 2
            return float(np.sum(np.arange(n) * mag) / np.sum(mag))

        shift_meas = (centroid(out.x) - centroid(pulse)) / fs
        # group delay of exp(+j (beta2/2) w^2 L) at +f0 is -beta2 L (2 pi f0);
        # its magnitude is the D L d(lambda) spread across the offset
        shift_pred = -beta2_s2_per_km(link) * link.total_length_km * 2 * math.pi * f0
        assert shift_meas == pytest.approx(shift_pred, rel=0.02)


class TestAse:
    def test_noiseless_flag_identity(self):
        _, blk = qpsk_block(n=512)
        assert add_ase(blk, None, np.random.default_rng(0)) is blk
        assert add_ase(blk, math.inf, np.random.default_rng(0)) is blk

    def test_noise_power_in_reference_band(self):
        _, blk = qpsk_block(n=2**16, sample_rate=256e9)
        p_sig = float(blk.power().sum())
        out = add_ase(blk, 20.0, np.random.default_rng(5), signal_power=p_sig)
        noise = out.samples - blk.samples
        freqs = np.fft.fftfreq(blk.num_samples, 1.0 / blk.sample_rate)
        in_ref = np.abs(freqs) <= 12.5e9 / 2.0
        spec = np.abs(np.fft.fft(noise, axis=1)) ** 2 / blk.num_samples**2
        p_ref = float(spec[:, in_ref].sum() * 1.0)
        target = p_sig / 10.0 ** (20.0 / 10.0)
        assert 10 * math.log10(p_ref / target) == pytest.approx(0.0, abs=0.1)

    def test_sequential_loading_adds_3db(self):
        _, blk = qpsk_block(n=2**15, sample_rate=256e9)
        p_sig = float(blk.power().sum())
        rng = np.random.default_rng(6)
        once = add_ase(blk, 20.0, rng, signal_power=p_sig)
        twice = add_ase(once, 20.0, rng, signal_power=p_sig)
        n1 = np.mean(np.abs(once.samples - blk.samples) ** 2)
        n2 = np.mean(np.abs(twice.samples - blk.samples) ** 2)
        assert 10 * math.log10(n2 / n1) == pytest.approx(3.01, abs=0.1)

    def test_seed_reproducibility(self):
        _, blk = qpsk_block(n=1024)
        a = add_ase(blk, 15.0, np.random.default_rng(9))
        b = add_ase(blk, 15.0, np.random.default_rng(9))
        np.testing.assert_array_equal(a.samples, b.samples)


class TestPhaseNoise:
    def test_zero_linewidth_identity(self):
        _, blk = qpsk_block(n=512)
        assert phase_noise(blk, 0.0, np.random.default_rng(0)) is blk

    def test_increment_variance(self):
        blk = SignalBlock(np.ones((2, 2**18), complex), 256e9, 2.0)
        out = phase_noise(blk, 100e3, np.random.default_rng(6))
        incr = np.diff(np.unwrap(np.angle(out.x)))
        target = 2 * math.pi * 100e3 / 256e9
        assert incr.var() == pytest.approx(target, rel=0.05)

    def test_track_continuous(self):
        blk = SignalBlock(np.ones((2, 2**16), complex), 256e9, 2.0)
        out = phase_noise(blk, 100e3, np.random.default_rng(7))
        incr = np.abs(np.diff(np.unwrap(np.angle(out.x))))
        sigma = math.sqrt(2 * math.pi * 100e3 / 256e9)
        assert incr.max() < 6.0 * sigma

    def test_same_track_on_both_polarizations(self):
        blk = SignalBlock(np.ones((2, 4096), complex), 256e9, 2.0)
        out = phase_noise(blk, 100e3, np.random.default_rng(8))
        np.testing.assert_allclose(np.angle(out.x), np.angle(out.y))


class TestIqImpair:
    def test_zero_config_identity(self):
        _, blk = qpsk_block(n=512)
        assert iq_impair(blk, ImpairmentConfig()) is blk

    def test_image_tone_matches_analytic_irr(self):
        n = 2**12
        fs = 2.0
        k = 256
        tone = np.exp(2j * math.pi * k / n * np.arange(n))
        blk = SignalBlock(np.stack([tone, tone]), fs, 2.0)
        for g_db, theta in ((1.0, 0.0), (0.5, 3.0), (0.0, 5.0)):
            imp = ImpairmentConfig(iq_gain_imbalance_db=g_db, iq_phase_error_deg=theta)
            out = iq_impair(blk, imp)
            spec = np.abs(np.fft.fft(out.x)) ** 2
            measured = 10 * np.log10(spec[k] / spec[n - k])
            assert measured == pytest.approx(
                image_rejection_ratio_db(g_db, theta), abs=1e-6
            )

    def test_skew_recovered_by_cross_correlation(self):
        rs = 130e9
        fs = 2 * rs
        rng = np.random.default_rng(10)
        tribs = np.zeros((4, 2**14))
        base = rng.normal(size=2**14)
        # band-limit so the fractional delay interpolation is exact
        spec = np.fft.rfft(base)
        spec[int(0.4 * len(spec)) :] = 0.0
        base = np.fft.irfft(spec, n=2**14)
        tribs[0] = base
        blk = SignalBlock.from_tributaries(tribs, fs, 2.0)
        skew = 2.0  # ps
        out = iq_impair(blk, ImpairmentConfig(skew_ps=(skew, 0.0, 0.0, 0.0)))
        delayed = out.tributaries()[0]
        # measure delay from the cross-spectrum phase slope
        cross = np.fft.rfft(delayed) * np.conj(np.fft.rfft(base))
        freqs = np.fft.rfftfreq(2**14, d=1.0 / fs)
        sel = (np.abs(cross) > 0.01 * np.abs(cross).max()) & (freqs > 0)
        slope = np.polyfit(freqs[sel], np.unwrap(np.angle(cross[sel])), 1)[0]
        measured_ps = -slope / (2 * math.pi) * 1e12
        assert measured_ps == pytest.approx(skew, rel=0.02)

    def test_frequency_offset_rotation(self):
        blk = SignalBlock(np.ones((2, 1000), complex), 1e9, 2.0)
        out = iq_impair(blk, ImpairmentConfig(frequency_offset_hz=1e6))
        phases = np.unwrap(np.angle(out.x))
        slope = np.polyfit(np.arange(1000) / 1e9, phases, 1)[0]
        assert slope == pytest.approx(2 * math.pi * 1e6, rel=1e-6)


class TestPolarization:
    def test_random_matrix_unitary(self):
        u = random_polarization(np.random.default_rng(2))
        np.testing.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-12)

    def test_rotation_preserves_total_power(self):
        _, blk = qpsk_block(n=1024)
        u = random_polarization(np.random.default_rng(3))
        out = polarization_rotate(blk, u)
        assert out.power().sum() == pytest.approx(blk.power().sum(), rel=1e-9)


class TestGnModel:
    def test_ase_only_slope_one(self):
        link = field_trial_link(1)  # eta = 0
        snrs = [gn_link_snr(link, p).snr_db for p in (-10.0, -9.0, 0.0, 1.0)]
        assert snrs[1] - snrs[0] == pytest.approx(1.0, abs=1e-9)
        assert snrs[3] - snrs[2] == pytest.approx(1.0, abs=1e-9)

    def test_doubling_spans_costs_3db_in_ase_regime(self):
        a = gn_link_snr(field_trial_link(1), 0.0).snr_db
        b = gn_link_snr(field_trial_link(2), 0.0).snr_db
        assert a - b == pytest.approx(3.01, abs=0.01)

    def test_calibrated_optimum_and_concavity(self):
        link = field_trial_link(1)
        link = link.with_eta(calibrate_eta(link, 7.0))
        grid = np.arange(-5.0, 15.0 + 1e-9, 0.01)
        snrs = np.array([gn_link_snr(link, p).snr_db for p in grid])
        argmax = grid[int(np.argmax(snrs))]
        assert argmax == pytest.approx(7.0, abs=0.5)
        # concave in dBm and the analytic optimum agrees with the grid argmax
        second = np.diff(snrs, 2)
        assert np.all(second < 1e-9)
        assert optimal_launch(link) == pytest.approx(argmax, abs=0.05)

    def test_asymptotic_slopes(self):
        link = field_trial_link(1)
        link = link.with_eta(calibrate_eta(link, 7.0))
        low = gn_link_snr(link, -29.0).snr_db - gn_link_snr(link, -30.0).snr_db
        high = gn_link_snr(link, 40.0).snr_db - gn_link_snr(link, 39.0).snr_db
        assert low == pytest.approx(1.0, abs=0.01)
        assert high == pytest.approx(-2.0, abs=0.01)

    def test_cube_root_shift_laws(self):
        link = field_trial_link(1).with_eta(1.0)
        base = optimal_launch(link)
        assert optimal_launch(link.with_eta(8.0)) == pytest.approx(base - 3.01, abs=0.01)
        doubled = LinkConfig(
            spans=link.spans * 2, nli_eta_per_w2=1.0
        )
        assert optimal_launch(doubled) == pytest.approx(base + 1.0035, abs=0.01)

    def test_no_optimum_without_nli(self):
        with pytest.raises(ValueError, match="optimum"):
            optimal_launch(field_trial_link(1))

    def test_budget_contributions(self):
        link = field_trial_link(1).with_eta(1.0)
        b = gn_link_snr(link, 7.0)
        total = 1.0 / (
            10 ** (-b.ase_only_snr_db / 10) + 10 ** (-b.nli_only_snr_db / 10)
        )
        assert 10 * math.log10(total) == pytest.approx(b.snr_db, abs=1e-9)
