"""Probabilistic amplitude shaping: distribution matching, framing, rate math.

The constant-composition matcher uses exact big-integer interval arithmetic
(lexicographic unranking of multiset permutations), so encode/decode round
trips are bit-exact for any composition. FEC is idealized: parity bits are
a seeded uniform placeholder occupying the sign-bit budget, and error-free
operation is a rate-accounting statement, not a decoder run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constellation import ShapedConstellation


def multinomial(n: int, counts) -> int:
    """Number of distinct sequences of length n with the given composition."""
    result = 1
    remaining = n
    for c in counts:
        result *= math.comb(remaining, c)
        remaining -= c
    return result


@dataclass(frozen=True)
class Composition:
    """Fixed per-block occurrence counts of the per-dimension amplitudes."""

    counts: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("composition counts must be non-negative")
        if sum(self.counts) < 1:
            raise ValueError("composition must cover at least one symbol")

    @property
    def block_length(self) -> int:
        return sum(self.counts)

    @property
    def num_sequences(self) -> int:
        return multinomial(self.block_length, self.counts)

    @property
    def input_bits(self) -> int:
        """Matcher input size k = floor(log2(#sequences))."""
        return self.num_sequences.bit_length() - 1


def composition_for(shaped: ShapedConstellation, block_length: int) -> Composition:
    """Quantize the per-dimension amplitude distribution to integer counts.

    Largest-remainder rounding followed by single-unit swaps that lower the
    KL divergence of counts/N from the target; deterministic.
    """
    if block_length < 1:
        raise ValueError("block length must be >= 1")
    target = shaped.per_dimension_amplitude_probs()
    n_levels = len(target)

    ideal = target * block_length
    counts = np.floor(ideal).astype(np.int64)
    remainder = ideal - counts
    short = block_length - int(counts.sum())
    for idx in np.argsort(-remainder, kind="stable")[:short]:
        counts[idx] += 1

    def divergence(c: np.ndarray) -> float:
        p = c / block_length
        mask = p > 0
        return float(np.sum(p[mask] * np.log2(p[mask] / target[mask])))

    best = divergence(counts)
    improved = True
    while improved:
        improved = False
        for i in range(n_levels):
            if counts[i] == 0:
                continue
            for j in range(n_levels):
                if i == j:
                    continue
                trial = counts.copy()
                trial[i] -= 1
                trial[j] += 1
                d = divergence(trial)
                if d < best - 1e-15:
                    counts, best = trial, d
                    improved = True
    return Composition(tuple(int(c) for c in counts))


def ccdm_encode(bits, comp: Composition) -> np.ndarray:
    """Map k uniform bits to an amplitude-index sequence of fixed composition.

    Interval subdivision with exact integers: at each position the remaining
    sequence count splits into per-symbol buckets proportional to the
    remaining counts, and the input index selects the bucket.
    """
    bits = np.asarray(bits, dtype=np.int64)
    k = comp.input_bits
    if bits.size != k:
        raise ValueError(f"matcher expects {k} input bits, got {bits.size}")
    index = 0
    for b in bits:
        index = (index << 1) | int(b)

    counts = list(comp.counts)
    remaining = comp.block_length
    total = comp.num_sequences
    out = np.empty(remaining, dtype=np.int64)
    for pos in range(comp.block_length):
        cum = 0
        for a, c in enumerate(counts):
            if c == 0:
                continue
            bucket = total * c // remaining  # exact: sequences starting with a
            if index < cum + bucket:
                out[pos] = a
                index -= cum
                total = bucket
                counts[a] -= 1
                remaining -= 1
                break
            cum += bucket
    return out


def ccdm_decode(amplitudes, comp: Composition) -> np.ndarray:
    """Exact inverse of :func:`ccdm_encode`."""
    amplitudes = np.asarray(amplitudes, dtype=np.int64)
    observed = np.bincount(amplitudes, minlength=len(comp.counts)) if amplitudes.size else np.zeros(len(comp.counts), dtype=np.int64)
    if amplitudes.size != comp.block_length or tuple(observed) != comp.counts:
        raise ValueError("sequence does not match the composition")

    counts = list(comp.counts)
    remaining = comp.block_length
    total = comp.num_sequences
    index = 0
    for a_obs in amplitudes:
        cum = 0
        for a in range(int(a_obs)):
            if counts[a]:
                cum += total * counts[a] // remaining
        index += cum
        total = total * counts[a_obs] // remaining
        counts[a_obs] -= 1
        remaining -= 1

    k = comp.input_bits
    if index >> k:
        raise ValueError("sequence is outside the matcher's image")
    return np.array([(index >> (k - 1 - i)) & 1 for i in range(k)], dtype=np.int64)


@dataclass(frozen=True)
class PasFrame:
    """One polarization's shaped frame plus the metadata needed to invert it."""

    symbol_indices: np.ndarray
    composition: Composition
    matcher_bits: int
    info_bits: int
    parity_bits: int
    rate_loss_bits_per_symbol: float

    def metadata(self) -> dict:
        return {
            "composition": list(self.composition.counts),
            "matcher_bits": self.matcher_bits,
            "info_bits": self.info_bits,
            "parity_bits": self.parity_bits,
            "rate_loss_bits_per_symbol": self.rate_loss_bits_per_symbol,
        }


def _parity_count(bits_per_symbol: int, overhead: float, n_symbols: int) -> int:
    code_rate = 1.0 / (1.0 + overhead)
    n_parity = int(round((1.0 - code_rate) * bits_per_symbol * n_symbols))
    if n_parity > 2 * n_symbols:
        raise ValueError(
            "parity bits exceed the sign-bit budget; overhead too large for this format"
        )
    return n_parity


def frame_info_bit_count(shaped: ShapedConstellation, overhead: float, n_symbols: int) -> int:
    """Information bits carried by one polarization's frame of n_symbols."""
    comp = composition_for(shaped, n_symbols)
    n_parity = _parity_count(shaped.bits_per_symbol, overhead, n_symbols)
    return 2 * comp.input_bits + 2 * n_symbols - n_parity


def pas_frame(
    info_bits,
    shaped: ShapedConstellation,
    overhead: float,
    n_symbols: int,
    parity_rng: np.random.Generator,
) -> PasFrame:
    """Frame information bits into shaped symbol indices (one polarization).

    Amplitudes come from one matcher per real dimension; sign bits carry the
    remaining information bits followed by seeded uniform parity placeholders
    in the last positions of the interleaved sign stream.
    """
    info_bits = np.asarray(info_bits, dtype=np.int64)
    comp = composition_for(shaped, n_symbols)
    k = comp.input_bits
    n_parity = _parity_count(shaped.bits_per_symbol, overhead, n_symbols)
    n_info = 2 * k + 2 * n_symbols - n_parity
    if info_bits.size != n_info:
        raise ValueError(f"frame expects {n_info} info bits, got {info_bits.size}")

    amp_i = ccdm_encode(info_bits[:k], comp)
    amp_q = ccdm_encode(info_bits[k : 2 * k], comp)
    signs = np.empty(2 * n_symbols, dtype=np.int64)
    signs[: 2 * n_symbols - n_parity] = info_bits[2 * k :]
    signs[2 * n_symbols - n_parity :] = parity_rng.integers(0, 2, size=n_parity)

    indices = shaped.base.index_from_components(
        amp_i, signs[0::2], amp_q, signs[1::2]
    )
    amp_entropy = -float(
        np.sum(
            shaped.per_dimension_amplitude_probs()
            * np.log2(shaped.per_dimension_amplitude_probs())
        )
    )
    rate_loss = 2.0 * (amp_entropy - k / n_symbols)
    return PasFrame(indices, comp, k, n_info, n_parity, rate_loss)


def pas_deframe(
    symbol_indices,
    shaped: ShapedConstellation,
    overhead: float,
    n_symbols: int,
) -> np.ndarray:
    """Recover the information bits from error-free symbol decisions."""
    symbol_indices = np.asarray(symbol_indices, dtype=np.int64)
    if symbol_indices.size != n_symbols:
        raise ValueError(f"expected {n_symbols} symbols, got {symbol_indices.size}")
    comp = composition_for(shaped, n_symbols)
    n_parity = _parity_count(shaped.bits_per_symbol, overhead, n_symbols)

    amp_i, sign_i, amp_q, sign_q = shaped.base.components_from_index(symbol_indices)
    signs = np.empty(2 * n_symbols, dtype=np.int64)
    signs[0::2] = sign_i
    signs[1::2] = sign_q
    return np.concatenate(
        [
            ccdm_decode(amp_i, comp),
            ccdm_decode(amp_q, comp),
            signs[: 2 * n_symbols - n_parity],
        ]
    )


@dataclass(frozen=True)
class RateBudget:
    """Net-bitrate arithmetic for a dual-polarization shaped format."""

    symbol_rate_baud: float
    entropy_bits: float
    bits_per_symbol: int
    fec_overhead: float
    code_rate: float
    net_bitrate_tbps: float
    air_tbps: float | None = None
    backoff_tbps: float | None = None
    bitwise_margin_tbps: float | None = None


def rate_budget(
    symbol_rate_baud: float,
    entropy_bits: float,
    bits_per_symbol: int,
    fec_overhead: float,
    air_tbps: float | None = None,
) -> RateBudget:
    """Net bitrate = 2 Rs (H - (1 - Rc) m), with Rc = 1/(1 + OH)."""
    if symbol_rate_baud <= 0:
        raise ValueError("symbol rate must be positive")
    if bits_per_symbol < 2:
        raise ValueError("need at least 2 bitlevels per complex symbol")
    if fec_overhead < 0:
        raise ValueError("FEC overhead must be non-negative")
    if not 2.0 < entropy_bits <= bits_per_symbol:
        raise ValueError(
            f"entropy {entropy_bits} must lie in (2, {bits_per_symbol}]"
        )
    code_rate = 1.0 / (1.0 + fec_overhead)
    net = 2.0 * symbol_rate_baud * (entropy_bits - (1.0 - code_rate) * bits_per_symbol)
    net_tbps = net / 1e12
    backoff = margin = None
    if air_tbps is not None:
        backoff = air_tbps - net_tbps
        margin = backoff / bits_per_symbol
    return RateBudget(
        symbol_rate_baud,
        entropy_bits,
        bits_per_symbol,
        fec_overhead,
        code_rate,
        net_tbps,
        air_tbps,
        backoff,
        margin,
    )


def fec_margin(air_tbps: float, net_tbps: float, bits_per_symbol: int) -> float:
    """Bitwise FEC margin: the net-bitrate backoff spread over the bitlevels."""
    if bits_per_symbol < 2:
        raise ValueError("need at least 2 bitlevels per complex symbol")
    return (air_tbps - net_tbps) / bits_per_symbol
