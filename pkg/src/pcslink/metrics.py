"""Figures of merit: achievable information rate, SNR, spectral efficiency.

Two AIR flavors are always available: the bitwise (BMD) estimator from LLRs,
which is the conservative headline number, and the symbol-metric estimator
from detector posteriors. Rates carry the dual-polarization factor of two
explicitly wherever bits/symbol are converted to Tb/s.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .constellation import ShapedConstellation
from .rxdsp import LLRBlock

POSTERIOR_FLOOR = 1e-30


class AlignmentError(RuntimeError):
    """LLRs do not line up with the transmitted bits they claim to match."""


def air_from_llrs(block: LLRBlock, clean_channel: bool = False) -> float:
    """Bitwise AIR: H minus the empirical conditional entropy of each bitlevel.

    AIR = H - sum_i E[log2(1 + exp(-(1-2 b_i) L_i))], clamped below at zero.
    With ``clean_channel`` set, an implausibly low estimate (below H/2) is
    treated as an alignment failure instead of a valid measurement.
    """
    signs = 1.0 - 2.0 * block.tx_bits
    # log2(1 + exp(-s*L)) computed stably
    losses = np.logaddexp(0.0, -signs * block.llrs) / math.log(2.0)
    air = block.entropy_bits - float(np.sum(np.mean(losses, axis=0)))
    if clean_channel and air < 0.5 * block.entropy_bits:
        raise AlignmentError(
            f"AIR {air:.3f} below half the entropy on a clean channel; check alignment"
        )
    return max(air, 0.0)


def air_from_posteriors(
    posteriors: np.ndarray, tx_indices: np.ndarray, shaped: ShapedConstellation
) -> tuple[float, int]:
    """Symbol-metric AIR: H + E[log2 q(x_tx | y)].

    Returns the rate and the count of floored (zero-posterior) events.
    """
    tx_indices = np.asarray(tx_indices, dtype=np.int64)
    probs = posteriors[np.arange(tx_indices.size), tx_indices]
    floored = int(np.count_nonzero(probs < POSTERIOR_FLOOR))
    probs = np.maximum(probs, POSTERIOR_FLOOR)
    air = shaped.entropy_bits + float(np.mean(np.log2(probs)))
    return max(air, 0.0), floored


def snr_estimate(rx_symbols: np.ndarray, tx_symbols: np.ndarray) -> float:
    """SNR in dB after a least-squares complex gain fit of rx onto tx."""
    rx = np.asarray(rx_symbols).ravel()
    tx = np.asarray(tx_symbols).ravel()
    if rx.shape != tx.shape:
        raise ValueError("sequences must have equal length")
    gain = np.vdot(rx, tx) / np.vdot(rx, rx)
    err = np.mean(np.abs(gain * rx - tx) ** 2)
    sig = np.mean(np.abs(tx) ** 2)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(sig / err)


def spectral_efficiency(total_tbps: float, n_channels: int, spacing_ghz: float) -> float:
    """Aggregate rate over occupied grid bandwidth, in bits/s/Hz."""
    if total_tbps <= 0 or n_channels <= 0 or spacing_ghz <= 0:
        raise ValueError("spectral efficiency inputs must be positive")
    return total_tbps * 1e3 / (n_channels * spacing_ghz)


@dataclass(frozen=True)
class MetricsReport:
    """One run's figures of merit plus the identifying metadata."""

    snr_db: float
    air_bits_per_symbol: float  # bitwise flavor, per polarization
    air_symbol_metric_bits: float | None
    air_tbps: float
    ngmi: float
    net_bitrate_tbps: float
    backoff_tbps: float
    bitwise_margin_tbps: float
    entropy_bits: float
    bits_per_symbol: int
    symbol_rate_baud: float
    seed: int | None = None
    dsp_config_hash: str | None = None
    format_label: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def build_report(
    shaped: ShapedConstellation,
    symbol_rate_baud: float,
    snr_db: float,
    air_bits: float,
    net_bitrate_tbps: float,
    air_symbol_metric_bits: float | None = None,
    seed: int | None = None,
    dsp_config_hash: str | None = None,
    format_label: str | None = None,
) -> MetricsReport:
    """Assemble the standard report; rates get the dual-polarization factor."""
    h = shaped.entropy_bits
    m = shaped.bits_per_symbol
    air_bits = min(air_bits, h)
    air_tbps = 2.0 * symbol_rate_baud * air_bits / 1e12
    ngmi = (air_bits - (h - m)) / m
    backoff = air_tbps - net_bitrate_tbps
    return MetricsReport(
        snr_db=snr_db,
        air_bits_per_symbol=air_bits,
        air_symbol_metric_bits=air_symbol_metric_bits,
        air_tbps=air_tbps,
        ngmi=ngmi,
        net_bitrate_tbps=net_bitrate_tbps,
        backoff_tbps=backoff,
        bitwise_margin_tbps=backoff / m,
        entropy_bits=h,
        bits_per_symbol=m,
        symbol_rate_baud=symbol_rate_baud,
        seed=seed,
        dsp_config_hash=dsp_config_hash,
        format_label=format_label,
    )
