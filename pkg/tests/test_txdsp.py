"""Tests for the transmitter chain: mapping, pulse shaping, DAC, nonlinearity."""

import math

import numpy as np
import pytest

from pcslink.constellation import apply_maxwell_boltzmann, build_qam, shaped_qam
from pcslink.txdsp import (
    DacConfig,
    SignalBlock,
    apply_rrc,
    dac_model,
    map_symbols,
    matched_filter,
    memoryless_nonlinearity,
    preemphasis,
    rrc_shape,
    rrc_taps,
)


def qpsk_block(seed=0, n=4096, sps=2, rolloff=0.1, sample_rate=None):
    rng = np.random.default_rng(seed)
    s = apply_maxwell_boltzmann(build_qam(4), 0.0)
    idx = rng.integers(0, 4, size=(2, n))
    syms = np.stack([map_symbols(idx[0], s), map_symbols(idx[1], s)])
    return syms, rrc_shape(syms, rolloff, sps, sample_rate=sample_rate)


class TestSignalBlock:
    def test_tributary_roundtrip(self):
        rng = np.random.default_rng(3)
        tribs = rng.normal(size=(4, 100))
        blk = SignalBlock.from_tributaries(tribs, 1e9, 2.0)
        np.testing.assert_allclose(blk.tributaries(), tribs)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            SignalBlock(np.zeros((3, 10), complex), 1.0, 1.0)
        with pytest.raises(ValueError):
            SignalBlock(np.zeros((2, 10), complex), -1.0, 1.0)

    def test_save_load_roundtrip(self, tmp_path):
        _, blk = qpsk_block(n=256)
        blk.save(tmp_path / "sig")
        loaded = SignalBlock.load(tmp_path / "sig")
        assert loaded.sample_rate == blk.sample_rate
        assert loaded.samples_per_symbol == blk.samples_per_symbol
        np.testing.assert_allclose(loaded.samples, blk.samples, atol=1e-6)


class TestMapSymbols:
    def test_qpsk_unit_energy_points(self):
        s = apply_maxwell_boltzmann(build_qam(4), 0.0)
        syms = map_symbols(np.arange(4), s)
        np.testing.assert_allclose(np.abs(syms) ** 2, 1.0, atol=1e-12)

    def test_index_out_of_range(self):
        s = apply_maxwell_boltzmann(build_qam(4), 0.0)
        with pytest.raises(ValueError, match="out of range"):
            map_symbols([0, 4], s)

    def test_shaped_mean_energy(self):
        s = shaped_qam(256, 7.9)
        rng = np.random.default_rng(11)
        idx = rng.choice(256, p=s.probs, size=100_000)
        energy = np.mean(np.abs(map_symbols(idx, s)) ** 2)
        assert energy == pytest.approx(1.0, abs=0.01)

    def test_empirical_frequencies_within_multinomial_bounds(self):
        s = shaped_qam(64, 5.5)
        rng = np.random.default_rng(12)
        n = 200_000
        idx = rng.choice(64, p=s.probs, size=n)
        counts = np.bincount(idx, minlength=64)
        sigma = np.sqrt(n * s.probs * (1 - s.probs))
        assert np.all(np.abs(counts - n * s.probs) <= 3.0 * sigma + 1.0)


class TestRrc:
    def test_impulse_response(self):
        taps = rrc_taps(0.1, 2, 64)
        impulse = np.zeros((2, 256), complex)
        impulse[:, 0] = 1.0
        blk = rrc_shape(impulse[:, ::2], 0.1, 2)
        half = taps.size // 2
        # zero-delay circular filter: response centered on the impulse
        np.testing.assert_allclose(blk.x[: half + 1].real, taps[half:], atol=1e-12)
        np.testing.assert_allclose(blk.x[-half:].real, taps[:half], atol=1e-12)

    def test_matched_pair_evm_below_minus_40db(self):
        syms, blk = qpsk_block()
        rec = matched_filter(blk, 0.1)
        evm = 10 * np.log10(
            np.mean(np.abs(rec - syms) ** 2) / np.mean(np.abs(syms) ** 2)
        )
        assert evm < -40.0

    def test_out_of_band_power(self):
        _, blk = qpsk_block(n=2**14)
        freqs = np.fft.fftfreq(blk.num_samples, 1.0 / blk.sample_rate)
        spectrum = np.abs(np.fft.fft(blk.x)) ** 2
        inband = np.abs(freqs) <= 0.5 * 1.1  # Rs (1 + rolloff) / 2
        ratio_db = 10 * np.log10(spectrum[~inband].sum() / spectrum[inband].sum())
        assert ratio_db < -40.0

    def test_rolloff_validated(self):
        with pytest.raises(ValueError):
            rrc_shape(np.zeros((2, 16), complex), 0.0, 2)
        with pytest.raises(ValueError):
            rrc_shape(np.zeros((2, 16), complex), 1.5, 2)


class TestPreemphasis:
    def test_zero_tilt_is_identity(self):
        _, blk = qpsk_block(n=512)
        assert preemphasis(blk, 0.0) is blk

    def test_eight_db_tilt_ratio(self):
        n = 2**14
        fs = 2.0
        t = np.arange(n) / fs

        def tone_gain(cycles):
            tone = np.cos(2 * math.pi * (cycles / n * fs) * t)
            blk = SignalBlock.from_tributaries(
                np.stack([tone, 0 * tone, 0 * tone, 0 * tone]), fs, 2.0
            )
            out = preemphasis(blk, 8.0)
            return 10 * np.log10(np.mean(out.tributaries()[0] ** 2) / np.mean(tone**2))

        f_lo, f_hi = 16 / n, 0.49
        measured = tone_gain(int(0.49 * n)) - tone_gain(16)
        predicted = 8.0 * (f_hi - f_lo) / 0.5
        assert measured == pytest.approx(predicted, abs=0.1)

    def test_inverse_tilt_cascade_flat(self):
        n = 2**13
        fs = 2.0
        rng = np.random.default_rng(5)
        tribs = rng.normal(size=(4, n))
        blk = SignalBlock.from_tributaries(tribs, fs, 2.0)
        pre = preemphasis(blk, 8.0)
        # channel with the matching -8 dB tilt (inverse response, same scaling)
        freqs = np.fft.rfftfreq(n, d=1.0 / fs)
        gain = 10.0 ** (8.0 * (freqs / (fs / 2)) / 20.0)
        weight = np.full(freqs.size, 2.0)
        weight[0] = 1.0
        weight[-1] = 1.0
        gain /= math.sqrt(np.sum(weight * gain**2) / n)
        out = np.fft.irfft(np.fft.rfft(pre.tributaries(), axis=1) / gain, n=n, axis=1)
        response = np.abs(np.fft.rfft(out[0])) / np.maximum(
            np.abs(np.fft.rfft(tribs[0])), 1e-12
        )
        ripple_db = 20 * np.log10(response[1:-1])
        assert np.max(np.abs(ripple_db)) < 0.1

    def test_linearity(self):
        rng = np.random.default_rng(6)
        a = SignalBlock.from_tributaries(rng.normal(size=(4, 512)), 2.0, 2.0)
        b = SignalBlock.from_tributaries(rng.normal(size=(4, 512)), 2.0, 2.0)
        both = SignalBlock.from_tributaries(a.tributaries() + b.tributaries(), 2.0, 2.0)
        lhs = preemphasis(both, 8.0).tributaries()
        rhs = preemphasis(a, 8.0).tributaries() + preemphasis(b, 8.0).tributaries()
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)


class TestDacModel:
    def test_ideal_configuration_is_identity(self):
        _, blk = qpsk_block(n=512, sample_rate=134e9)
        out = dac_model(blk, DacConfig(enob=None, bandwidth_3db=None))
        np.testing.assert_allclose(out.samples, blk.samples, atol=1e-6)

    def test_enob5_full_scale_sine_sndr(self):
        fs = 134e9
        n = 2**14
        sine = np.sin(2 * math.pi * (fs / 8) * np.arange(n) / fs)
        blk = SignalBlock.from_tributaries(np.stack([sine] * 4), fs, 2.0)
        out = dac_model(
            blk, DacConfig(enob=5.0, bandwidth_3db=None), np.random.default_rng(7)
        )
        err = out.tributaries()[0] - sine
        sndr = 10 * np.log10(np.mean(sine**2) / np.mean(err**2))
        assert sndr == pytest.approx(6.02 * 5 + 1.76, abs=0.5)

    def test_bandwidth_tone_attenuation(self):
        fs = 134e9
        n = 134_000
        tone = np.sin(2 * math.pi * 65e9 * np.arange(n) / fs)
        blk = SignalBlock.from_tributaries(np.stack([tone] * 4), fs, 2.0)
        out = dac_model(blk, DacConfig(enob=None, bandwidth_3db=65e9))
        att = 10 * np.log10(np.mean(out.tributaries()[0] ** 2) / np.mean(tone**2))
        assert att == pytest.approx(-3.0, abs=0.3)

    def test_noise_requires_rng(self):
        _, blk = qpsk_block(n=256)
        with pytest.raises(ValueError, match="random generator"):
            dac_model(blk, DacConfig(enob=5.0))

    def test_reproducible_from_seed(self):
        _, blk = qpsk_block(n=512, sample_rate=134e9)
        cfg = DacConfig(enob=5.0, bandwidth_3db=65e9)
        a = dac_model(blk, cfg, np.random.default_rng(42))
        b = dac_model(blk, cfg, np.random.default_rng(42))
        np.testing.assert_array_equal(a.samples, b.samples)


class TestMemorylessNonlinearity:
    def test_zero_coefficient_identity(self):
        _, blk = qpsk_block(n=256)
        np.testing.assert_array_equal(
            memoryless_nonlinearity(blk, 0.0).samples, blk.samples
        )

    def test_direct_evaluation(self):
        blk = SignalBlock.from_tributaries(np.full((4, 8), 1.0), 1.0, 1.0)
        out = memoryless_nonlinearity(blk, -0.05)
        np.testing.assert_allclose(out.tributaries(), 0.95)

    def test_non_monotone_rejected(self):
        blk = SignalBlock.from_tributaries(np.full((4, 8), 2.0), 1.0, 1.0)
        with pytest.raises(ValueError, match="non-monotone"):
            memoryless_nonlinearity(blk, -0.1)

    def test_distortion_degrades_evm_by_3db(self):
        rng = np.random.default_rng(13)
        s = shaped_qam(256, 7.9)
        idx = rng.choice(256, p=s.probs, size=(2, 8192))
        syms = np.stack([map_symbols(idx[0], s), map_symbols(idx[1], s)])
        clean = rrc_shape(syms, 0.1, 2)

        def evm_db(block):
            rec = matched_filter(block, 0.1)
            scale = np.vdot(rec, syms) / np.vdot(rec, rec)
            return 10 * np.log10(np.mean(np.abs(scale * rec - syms) ** 2))

        base = evm_db(clean)
        distorted = evm_db(memoryless_nonlinearity(clean, -0.1))
        assert distorted - base > 3.0


class TestChainInvariants:
    def test_pipeline_linearity_with_ideal_converter(self):
        rng = np.random.default_rng(8)

        def chain(block):
            out = rrc_shape(block, 0.1, 2, sample_rate=134e9)
            out = preemphasis(out, 8.0)
            return dac_model(out, DacConfig(enob=None, bandwidth_3db=60e9))

        a = rng.normal(size=(2, 1024)) + 1j * rng.normal(size=(2, 1024))
        b = rng.normal(size=(2, 1024)) + 1j * rng.normal(size=(2, 1024))
        lhs = chain(a + b).samples
        rhs = chain(a).samples + chain(b).samples
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_tributaries_processed_independently(self):
        rng = np.random.default_rng(9)
        tribs = rng.normal(size=(4, 1024))
        blk = SignalBlock.from_tributaries(tribs, 134e9, 2.0)
        modified = tribs.copy()
        modified[2] += rng.normal(size=1024)
        blk_mod = SignalBlock.from_tributaries(modified, 134e9, 2.0)
        for stage in (
            lambda x: preemphasis(x, 8.0),
            lambda x: dac_model(x, DacConfig(enob=None, bandwidth_3db=50e9)),
            lambda x: memoryless_nonlinearity(x, -0.01),
        ):
            out_a = stage(blk).tributaries()
            out_b = stage(blk_mod).tributaries()
            np.testing.assert_allclose(out_a[[0, 1, 3]], out_b[[0, 1, 3]], atol=1e-12)
            assert not np.allclose(out_a[2], out_b[2])

    def test_matched_filter_keeps_rate_variant(self):
        _, blk = qpsk_block(n=512)
        filtered = apply_rrc(blk, 0.1)
        assert filtered.num_samples == blk.num_samples
        assert filtered.sample_rate == blk.sample_rate
