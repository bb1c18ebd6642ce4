"""Link impairments: dispersion, ASE loading, laser phase noise, I/Q errors,
and the analytic Gaussian-noise budget for launch-power and multi-span studies.

Kerr nonlinearity is not propagated; it enters only through the GN-model
coefficient eta, which is calibrated per link (one fit anchors the launch
optimum), never predicted from fiber parameters. All stochastic stages take
an explicit generator, so identical seeds give bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.constants as const

from .txdsp import SignalBlock

REFERENCE_BANDWIDTH_HZ = 12.5e9  # 0.1 nm at 1550 nm


@dataclass(frozen=True)
class Span:
    length_km: float
    attenuation_db: float

    def __post_init__(self):
        if self.length_km <= 0:
            raise ValueError("span length must be positive")
        if self.attenuation_db < 0:
            raise ValueError("span attenuation must be >= 0 dB")


@dataclass(frozen=True)
class LinkConfig:
    """EDFA-amplified fiber chain; each span's gain equals its attenuation."""

    spans: tuple[Span, ...]
    dispersion_ps_nm_km: float = 17.0
    center_frequency_hz: float = 193.5e12
    edfa_noise_figure_db: float = 5.0
    nli_eta_per_w2: float = 0.0
    reference_bandwidth_hz: float = REFERENCE_BANDWIDTH_HZ

    @property
    def total_length_km(self) -> float:
        return sum(s.length_km for s in self.spans)

    @property
    def wavelength_m(self) -> float:
        return const.c / self.center_frequency_hz

    def ase_power_w(self) -> float:
        """Accumulated ASE power in the reference bandwidth over all spans."""
        nf_lin = 10.0 ** (self.edfa_noise_figure_db / 10.0)
        photon = const.h * self.center_frequency_hz
        total = 0.0
        for span in self.spans:
            gain = 10.0 ** (span.attenuation_db / 10.0)
            total += (gain - 1.0) * nf_lin * photon * self.reference_bandwidth_hz
        return total

    def with_eta(self, eta: float) -> "LinkConfig":
        return replace(self, nli_eta_per_w2=eta)


def field_trial_link(n_spans: int = 1, eta: float = 0.0) -> LinkConfig:
    """Chain of 61.3 km spans at 19.5 dB each (single-carrier experiments)."""
    return LinkConfig(
        spans=tuple(Span(61.3, 19.5) for _ in range(n_spans)),
        nli_eta_per_w2=eta,
    )


def dwdm_link(eta: float = 0.0) -> LinkConfig:
    """Single 96.5 km span with 23 dB attenuation (DWDM experiment)."""
    return LinkConfig(spans=(Span(96.5, 23.0),), nli_eta_per_w2=eta)


@dataclass(frozen=True)
class ImpairmentConfig:
    """Front-end error budget applied on top of the fiber effects."""

    linewidth_hz: float = 0.0  # combined Tx + LO
    iq_gain_imbalance_db: float = 0.0
    iq_phase_error_deg: float = 0.0
    skew_ps: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    frequency_offset_hz: float = 0.0

    def __post_init__(self):
        if self.linewidth_hz < 0:
            raise ValueError("linewidth must be >= 0")

    def is_identity(self) -> bool:
        return (
            self.iq_gain_imbalance_db == 0.0
            and self.iq_phase_error_deg == 0.0
            and all(s == 0.0 for s in self.skew_ps)
            and self.frequency_offset_hz == 0.0
        )


def beta2_s2_per_km(link: LinkConfig) -> float:
    """Group-velocity dispersion from D and the carrier wavelength."""
    d_si = link.dispersion_ps_nm_km * 1e-6  # s/m^2 per km
    return -d_si * link.wavelength_m**2 / (2.0 * math.pi * const.c)


def apply_cd(sig: SignalBlock, link: LinkConfig, sign: float = 1.0) -> SignalBlock:
    """All-pass chromatic dispersion H = exp(j sign (beta2/2) w^2 L); unitary."""
    if link.total_length_km == 0.0:
        return sig
    n = sig.num_samples
    omega = 2.0 * math.pi * np.fft.fftfreq(n, d=1.0 / sig.sample_rate)
    phase = sign * 0.5 * beta2_s2_per_km(link) * link.total_length_km * omega**2
    out = np.fft.ifft(np.fft.fft(sig.samples, axis=1) * np.exp(1j * phase), axis=1)
    return sig.with_samples(out)


def add_ase(
    sig: SignalBlock,
    osnr_db: float | None,
    rng: np.random.Generator,
    ref_bandwidth_hz: float = REFERENCE_BANDWIDTH_HZ,
    signal_power: float | None = None,
) -> SignalBlock:
    """Load white complex Gaussian noise to hit an OSNR in the reference band.

    OSNR is total signal power over the two-polarization noise power falling
    in ``ref_bandwidth_hz``. Pass ``signal_power`` (total, both pols) to pin
    the operating point independent of noise already present; default is the
    measured block power. ``osnr_db=None`` means noiseless.
    """
    if osnr_db is None or math.isinf(osnr_db):
        return sig
    p_signal = signal_power if signal_power is not None else float(sig.power().sum())
    osnr_lin = 10.0 ** (osnr_db / 10.0)
    var_per_pol = p_signal * sig.sample_rate / (2.0 * osnr_lin * ref_bandwidth_hz)
    noise = rng.normal(size=(2, 2, sig.num_samples)) * math.sqrt(var_per_pol / 2.0)
    return sig.with_samples(sig.samples + noise[0] + 1j * noise[1])


def phase_noise(
    sig: SignalBlock, linewidth_hz: float, rng: np.random.Generator
) -> SignalBlock:
    """Wiener laser phase: increment variance 2 pi linewidth / sample rate.

    One track multiplies both polarizations (a single-laser transceiver);
    split Tx/LO behavior comes from calling twice with half the linewidth.
    """
    if linewidth_hz < 0:
        raise ValueError("linewidth must be >= 0")
    if linewidth_hz == 0.0:
        return sig
    var = 2.0 * math.pi * linewidth_hz / sig.sample_rate
    increments = rng.normal(0.0, math.sqrt(var), size=sig.num_samples)
    track = np.cumsum(increments)
    return sig.with_samples(sig.samples * np.exp(1j * track))


def iq_impair(sig: SignalBlock, imp: ImpairmentConfig) -> SignalBlock:
    """Gain/phase imbalance on Q, per-tributary skew, and frequency offset."""
    if imp.is_identity():
        return sig
    samples = sig.samples

    if imp.iq_gain_imbalance_db != 0.0 or imp.iq_phase_error_deg != 0.0:
        g = 10.0 ** (imp.iq_gain_imbalance_db / 20.0)
        theta = math.radians(imp.iq_phase_error_deg)
        rot = g * complex(math.cos(theta), math.sin(theta))
        i_part = samples.real
        q_part = samples.imag
        samples = i_part + (1j * rot) * q_part

    if any(s != 0.0 for s in imp.skew_ps):
        tribs = np.stack(
            [samples[0].real, samples[0].imag, samples[1].real, samples[1].imag]
        )
        n = tribs.shape[1]
        freqs = np.fft.rfftfreq(n, d=1.0 / sig.sample_rate)
        for t, skew in enumerate(imp.skew_ps):
            if skew == 0.0:
                continue
            ramp = np.exp(-2j * math.pi * freqs * skew * 1e-12)
            tribs[t] = np.fft.irfft(np.fft.rfft(tribs[t]) * ramp, n=n)
        samples = np.stack([tribs[0] + 1j * tribs[1], tribs[2] + 1j * tribs[3]])

    if imp.frequency_offset_hz != 0.0:
        t = np.arange(sig.num_samples) / sig.sample_rate
        samples = samples * np.exp(2j * math.pi * imp.frequency_offset_hz * t)

    return sig.with_samples(samples)


def image_rejection_ratio_db(gain_imbalance_db: float, phase_error_deg: float) -> float:
    """Analytic IRR for the gain/phase imbalance model used by iq_impair."""
    g = 10.0 ** (gain_imbalance_db / 20.0)
    rot = g * np.exp(1j * math.radians(phase_error_deg))
    return 10.0 * math.log10(abs((1.0 + rot) / (1.0 - rot)) ** 2)


def random_polarization(rng: np.random.Generator) -> np.ndarray:
    """Static unitary 2x2 polarization rotation drawn uniformly."""
    theta = rng.uniform(0.0, 2.0 * math.pi)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    psi = rng.uniform(0.0, 2.0 * math.pi)
    c, s = math.cos(theta), math.sin(theta)
    return np.array(
        [
            [c * np.exp(1j * phi), s * np.exp(1j * psi)],
            [-s * np.exp(-1j * psi), c * np.exp(-1j * phi)],
        ]
    )


def polarization_rotate(sig: SignalBlock, matrix: np.ndarray) -> SignalBlock:
    """Apply a 2x2 Jones matrix across the two polarizations."""
    return sig.with_samples(matrix @ sig.samples)


@dataclass(frozen=True)
class GnLinkBudget:
    """GN-model operating point: total and per-contribution SNRs."""

    launch_power_dbm: float
    snr_db: float
    ase_only_snr_db: float
    nli_only_snr_db: float
    ase_power_w: float
    nli_power_w: float


def gn_link_snr(link: LinkConfig, launch_power_dbm: float) -> GnLinkBudget:
    """SNR = P / (P_ase + eta P^3) with ASE accumulated over the EDFA chain."""
    p = 10.0 ** (launch_power_dbm / 10.0) * 1e-3
    p_ase = link.ase_power_w()
    p_nli = link.nli_eta_per_w2 * p**3
    snr = p / (p_ase + p_nli)
    ase_snr = p / p_ase if p_ase > 0 else math.inf
    nli_snr = p / p_nli if p_nli > 0 else math.inf
    to_db = lambda v: 10.0 * math.log10(v) if math.isfinite(v) else math.inf
    return GnLinkBudget(
        launch_power_dbm, to_db(snr), to_db(ase_snr), to_db(nli_snr), p_ase, p_nli
    )


def optimal_launch(link: LinkConfig) -> float:
    """Closed-form GN optimum P_opt = (P_ase / (2 eta))^(1/3), in dBm."""
    if link.nli_eta_per_w2 <= 0.0:
        raise ValueError("no finite launch optimum without a positive NLI coefficient")
    p_opt = (link.ase_power_w() / (2.0 * link.nli_eta_per_w2)) ** (1.0 / 3.0)
    return 10.0 * math.log10(p_opt / 1e-3)


def calibrate_eta(link: LinkConfig, target_optimum_dbm: float = 7.0) -> float:
    """Fit eta so the launch-power optimum lands at the chosen anchor."""
    p_opt = 10.0 ** (target_optimum_dbm / 10.0) * 1e-3
    return link.ase_power_w() / (2.0 * p_opt**3)
