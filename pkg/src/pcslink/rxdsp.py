"""Receiver DSP: dispersion compensation, adaptive 2x2 equalization, carrier
recovery, real-tributary Volterra equalization, partial-response whitening,
BCJR sequence detection, and soft demapping.

Processing order mirrors the transponder chain: Rx-side nonlinear equalizer,
channel equalization, carrier recovery, Tx-side nonlinear equalizer, then
PREQ + BCJR (or memoryless demapping). Adaptive stages are stateful per-run
objects; everything downstream of them is pure.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .channel import LinkConfig, apply_cd
from .constellation import ShapedConstellation
from .txdsp import SignalBlock

LARGE_TRELLIS_LIMIT = 64


class EqualizerDivergence(RuntimeError):
    """Raised when an adaptive stage's error power keeps growing."""


def cd_compensate(sig: SignalBlock, link: LinkConfig) -> SignalBlock:
    """Exact inverse of the link's chromatic dispersion (conjugate all-pass)."""
    return apply_cd(sig, link, sign=-1.0)


def hard_decide(values: np.ndarray, shaped: ShapedConstellation) -> np.ndarray:
    """Nearest-point indices on the square grid (O(1) per symbol via snapping)."""
    side = shaped.base.side
    scale = shaped.base.grid_scale * shaped.energy_scale
    li = np.clip(np.rint((values.real / scale + side - 1) / 2.0), 0, side - 1)
    lq = np.clip(np.rint((values.imag / scale + side - 1) / 2.0), 0, side - 1)
    return (li * side + lq).astype(np.int64)


def align_to_reference(rx: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, int, complex]:
    """Circular-lag search plus least-squares complex gain onto a reference.

    Returns the aligned/derotated stream, the lag removed, and the gain.
    """
    if rx.shape != ref.shape:
        raise ValueError("sequences must have equal length")
    corr = np.fft.ifft(np.fft.fft(rx) * np.conj(np.fft.fft(ref)))
    lag = int(np.argmax(np.abs(corr)))
    aligned = np.roll(rx, -lag)
    gain = np.vdot(aligned, ref) / np.vdot(aligned, aligned)
    return aligned * gain, lag, complex(gain)


# ---------------------------------------------------------------------------
# 2x2 adaptive butterfly


@dataclass
class EqualizerState:
    """T/2-spaced butterfly taps plus the adaptation bookkeeping."""

    taps: np.ndarray  # (2, 2, T) complex: [out_pol, in_pol, tap]
    step: float
    mode: str = "pilot"  # 'pilot' (data-aided then DD) or 'dd'
    mse_trace: list[float] = field(default_factory=list)

    @property
    def num_taps(self) -> int:
        return self.taps.shape[2]


def create_equalizer(num_taps: int = 65, step: float = 1e-3, mode: str = "pilot") -> EqualizerState:
    if num_taps % 2 == 0:
        raise ValueError("tap count must be odd")
    if step <= 0:
        raise ValueError("step size must be positive")
    taps = np.zeros((2, 2, num_taps), dtype=np.complex128)
    taps[0, 0, num_taps // 2] = 1.0
    taps[1, 1, num_taps // 2] = 1.0
    return EqualizerState(taps, step, mode)


def mimo_equalize(
    sig: SignalBlock,
    state: EqualizerState,
    pilots: np.ndarray | None = None,
    shaped: ShapedConstellation | None = None,
    block_size: int = 256,
) -> np.ndarray:
    """LMS 2x2 butterfly at two samples per symbol; returns (2, n_sym) symbols.

    Pilot mode adapts against ``pilots`` (2, n_pilot) first and then switches
    to decisions, which need ``shaped`` for the slicer. A sustained rise of
    the block-averaged error power raises :class:`EqualizerDivergence`.
    """
    sps = int(round(sig.samples_per_symbol))
    if sps < 2:
        raise ValueError("butterfly equalizer needs at least 2 samples/symbol")
    if state.mode == "pilot" and pilots is None:
        raise ValueError("pilot mode requires pilot symbols")

    scale = np.sqrt(sig.power().mean())
    u = sig.samples / scale
    taps = state.taps
    half = state.num_taps // 2
    n_sym = (sig.num_samples - state.num_taps) // sps
    n_pilot = 0 if pilots is None else pilots.shape[1]
    out = np.zeros((2, n_sym), dtype=np.complex128)

    block_acc = 0.0
    block_count = 0
    rising = 0
    prev_block = math.inf
    for k in range(n_sym):
        window = u[:, k * sps : k * sps + state.num_taps][:, ::-1]
        y = np.einsum("pqt,qt->p", taps, window)
        out[:, k] = y
        if k < n_pilot:
            target = pilots[:, k]
        elif shaped is not None:
            target = shaped.points[hard_decide(y, shaped)]
        else:
            target = y  # nothing to adapt against; freeze
        err = target - y
        taps += state.step * err[:, None, None] * np.conj(window)[None, :, :]

        block_acc += float(np.sum(np.abs(err) ** 2))
        block_count += 1
        if block_count == block_size:
            mse = block_acc / (2 * block_size)
            state.mse_trace.append(mse)
            if mse > prev_block:
                rising += 1
                if rising >= 5 and mse > 10.0 * min(state.mse_trace):
                    raise EqualizerDivergence(
                        f"block MSE rose for {rising} blocks (now {mse:.3e})"
                    )
            else:
                rising = 0
            prev_block = mse
            block_acc = 0.0
            block_count = 0

    state.taps = taps
    return out


def least_squares_equalize(
    received: np.ndarray,
    training: np.ndarray,
    n_train: int,
    num_taps: int = 41,
    ridge: float = 1e-6,
) -> np.ndarray:
    """Symbol-spaced linear equalizer solved directly on the training block.

    A deterministic alternative to the adaptive butterfly for single-stream
    work: fitting on noisy observations against clean symbols converges to
    the MMSE filter, so the residual keeps the channel's noise coloring the
    partial-response stage is built to exploit.
    """
    if num_taps % 2 == 0:
        raise ValueError("tap count must be odd")
    half = num_taps // 2
    padded = np.concatenate(
        [np.zeros(half, complex), received, np.zeros(half, complex)]
    )
    windows = np.lib.stride_tricks.sliding_window_view(padded, num_taps)[: received.size]
    a = windows[:n_train]
    gram = a.conj().T @ a + ridge * np.eye(num_taps)
    taps = np.linalg.solve(gram, a.conj().T @ training[:n_train])
    return windows @ taps


# ---------------------------------------------------------------------------
# carrier recovery


@dataclass(frozen=True)
class CarrierConfig:
    symbol_rate_hz: float
    test_phases: int = 64
    window: int = 128
    estimate_frequency: bool = True
    pilot_symbols: np.ndarray | None = None  # (2, n_pilot) for slip checks
    pilot_segments: int = 4


@dataclass(frozen=True)
class CarrierResult:
    symbols: np.ndarray
    phase_track: np.ndarray
    frequency_offset_hz: float
    cycle_slip: bool


def coarse_frequency_offset(symbols: np.ndarray, symbol_rate: float) -> float:
    """Fourth-power frequency-offset estimate usable before equalization."""
    return _fourth_power_foe(np.atleast_2d(symbols), symbol_rate)


def _fourth_power_foe(symbols: np.ndarray, symbol_rate: float) -> float:
    """Frequency offset from the peak of the fourth-power spectrum."""
    n = symbols.shape[-1]
    spec = np.abs(np.fft.fft(symbols**4, axis=-1)) ** 2
    spec = spec.sum(axis=0) if spec.ndim == 2 else spec
    peak = int(np.argmax(spec))
    # parabolic refinement on the log spectrum
    left, right = spec[(peak - 1) % n], spec[(peak + 1) % n]
    denom = np.log(left) - 2.0 * np.log(spec[peak]) + np.log(right)
    frac = 0.0 if denom == 0 else 0.5 * (np.log(left) - np.log(right)) / denom
    bin_freq = np.fft.fftfreq(n, d=1.0 / symbol_rate)
    step = symbol_rate / n
    return float((bin_freq[peak] + frac * step) / 4.0)


def _bps_track(
    symbols: np.ndarray, shaped: ShapedConstellation, num_phases: int, window: int
) -> np.ndarray:
    """Blind phase search over the pi/2 sector with moving-average smoothing."""
    n = symbols.size
    phases = -math.pi / 4.0 + (math.pi / 2.0) * np.arange(num_phases) / num_phases
    dists = np.empty((num_phases, n))
    kernel = np.ones(window) / window
    for b, phi in enumerate(phases):
        rotated = symbols * np.exp(1j * phi)
        nearest = shaped.points[hard_decide(rotated, shaped)]
        d = np.abs(rotated - nearest) ** 2
        dists[b] = np.convolve(d, kernel, mode="same")
    best = np.argmin(dists, axis=0)
    raw = phases[best]
    # unwrap across the pi/2 sector boundaries
    track = np.empty(n)
    track[0] = raw[0]
    for k in range(1, n):
        delta = (raw[k] - track[k - 1] + math.pi / 4.0) % (math.pi / 2.0) - math.pi / 4.0
        track[k] = track[k - 1] + delta
    return track


def carrier_recover(
    symbols: np.ndarray, shaped: ShapedConstellation, cfg: CarrierConfig
) -> CarrierResult:
    """Remove frequency offset then track phase per polarization via BPS.

    If pilots are configured, the per-polarization quadrant ambiguity is
    resolved against them and a per-segment re-check flags cycle slips.
    """
    symbols = np.atleast_2d(symbols)
    n = symbols.shape[1]
    f_off = 0.0
    if cfg.estimate_frequency:
        f_off = _fourth_power_foe(symbols, cfg.symbol_rate_hz)
        t = np.arange(n) / cfg.symbol_rate_hz
        symbols = symbols * np.exp(-2j * math.pi * f_off * t)

    out = np.empty_like(symbols)
    tracks = np.empty((symbols.shape[0], n))
    cycle_slip = False
    for p in range(symbols.shape[0]):
        track = _bps_track(symbols[p], shaped, cfg.test_phases, cfg.window)
        corrected = symbols[p] * np.exp(1j * track)
        if cfg.pilot_symbols is not None:
            pilots = cfg.pilot_symbols[p]
            npil = pilots.size
            rotations = np.exp(1j * math.pi / 2.0 * np.arange(4))
            errs = [
                np.mean(np.abs(corrected[:npil] * r - pilots) ** 2) for r in rotations
            ]
            best = int(np.argmin(errs))
            corrected = corrected * rotations[best]
            seg = max(1, npil // cfg.pilot_segments)
            for s in range(cfg.pilot_segments):
                sl = slice(s * seg, min((s + 1) * seg, npil))
                if sl.start >= npil:
                    break
                seg_errs = [
                    np.mean(np.abs(corrected[sl] * r - pilots[sl]) ** 2)
                    for r in rotations
                ]
                if int(np.argmin(seg_errs)) != 0:
                    cycle_slip = True
        out[p] = corrected
        tracks[p] = track
    return CarrierResult(out, tracks, f_off, cycle_slip)


# ---------------------------------------------------------------------------
# real-tributary Volterra equalizer


@dataclass(frozen=True)
class VolterraConfig:
    """Kernel sizes and adaptation steps for the per-tributary equalizer."""

    order: int = 3
    memory: tuple[int, int, int] = (41, 9, 5)
    step: tuple[float, float, float] = (2e-3, 5e-4, 2e-4)
    placement: str = "rx"  # 'rx' (front end) or 'tx' (post-demodulation)
    cross_terms: bool = False
    epochs: int = 1

    def __post_init__(self):
        if not 1 <= self.order <= 3:
            raise ValueError("order must be 1, 2, or 3")
        if self.memory[0] < 1:
            raise ValueError("linear memory must be >= 1")


@dataclass
class VolterraState:
    weights: list[np.ndarray]
    mse_trace: list[float]

    def dump(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "mse_trace": self.mse_trace,
        }


def _volterra_features(x: np.ndarray, cfg: VolterraConfig, partner: np.ndarray | None):
    """Feature matrix (n, F), per-order slices, and the per-feature steps."""
    l1, l2, l3 = cfg.memory
    lmax = max(l1, l2 if cfg.order >= 2 else 1, l3 if cfg.order >= 3 else 1)
    if cfg.cross_terms and partner is not None:
        lmax = max(lmax, l1)
    half = lmax // 2
    n = x.size
    padded = np.concatenate([np.zeros(half), x, np.zeros(half)])
    lagged = np.lib.stride_tricks.sliding_window_view(padded, lmax)[:n]

    def centered(width: int) -> np.ndarray:
        off = (lmax - width) // 2
        return lagged[:, off : off + width]

    blocks = [centered(l1)]
    steps = [np.full(l1, cfg.step[0])]
    if cfg.order >= 2:
        w2 = centered(l2)
        ii, jj = np.triu_indices(l2)
        blocks.append(w2[:, ii] * w2[:, jj])
        steps.append(np.full(ii.size, cfg.step[1]))
    if cfg.order >= 3:
        w3 = centered(l3)
        triples = [
            (i, j, k)
            for i in range(l3)
            for j in range(i, l3)
            for k in range(j, l3)
        ]
        cols = np.stack([w3[:, i] * w3[:, j] * w3[:, k] for i, j, k in triples], axis=1)
        blocks.append(cols)
        steps.append(np.full(len(triples), cfg.step[2]))
    if cfg.cross_terms and partner is not None:
        padded_p = np.concatenate([np.zeros(half), partner, np.zeros(half)])
        lagged_p = np.lib.stride_tricks.sliding_window_view(padded_p, lmax)[:n]
        off = (lmax - l1) // 2
        blocks.append(lagged_p[:, off : off + l1])
        steps.append(np.full(l1, cfg.step[0]))
    return np.concatenate(blocks, axis=1), np.concatenate(steps), l1


def volterra_equalize(
    tributaries: np.ndarray,
    cfg: VolterraConfig,
    reference: np.ndarray,
    train_len: int | None = None,
) -> tuple[np.ndarray, list[VolterraState]]:
    """LMS-adapted polynomial filter, independently per real tributary.

    ``tributaries`` and ``reference`` are (4, n) real arrays in XI, XQ, YI,
    YQ order (any leading size works; rows pair I/Q within a polarization
    for the optional cross terms). Training runs over ``train_len`` samples
    (default all), then the frozen kernels filter the whole record.
    """
    tributaries = np.atleast_2d(tributaries)
    reference = np.atleast_2d(reference)
    if tributaries.shape != reference.shape:
        raise ValueError("reference must match the tributary array shape")
    n_trib, n = tributaries.shape
    train = n if train_len is None else min(train_len, n)

    out = np.empty_like(tributaries, dtype=np.float64)
    states: list[VolterraState] = []
    for t in range(n_trib):
        partner = tributaries[t ^ 1] if (cfg.cross_terms and n_trib in (2, 4)) else None
        feats, steps, l1 = _volterra_features(tributaries[t], cfg, partner)
        w = np.zeros(feats.shape[1])
        w[l1 // 2] = 1.0
        mse_trace: list[float] = []
        block_err = 0.0
        rising = 0
        prev = math.inf
        for _ in range(cfg.epochs):
            for k in range(train):
                row = feats[k]
                e = reference[t, k] - float(row @ w)
                w += steps * e * row
                block_err += e * e
                if (k + 1) % 1024 == 0:
                    mse = block_err / 1024.0
                    mse_trace.append(mse)
                    rising = rising + 1 if mse > prev else 0
                    if rising >= 5 and mse > 10.0 * min(mse_trace):
                        raise EqualizerDivergence(
                            f"tributary {t}: Volterra MSE rose for {rising} blocks"
                        )
                    prev = mse
                    block_err = 0.0
        out[t] = feats @ w
        states.append(VolterraState([w.copy()], mse_trace))
    return out, states


# ---------------------------------------------------------------------------
# partial response + BCJR


@dataclass(frozen=True)
class PartialResponseModel:
    """First-order partial-response target 1 + alpha D and its noise floor."""

    alpha: float
    sigma2: float

    def __post_init__(self):
        if not abs(self.alpha) < 1.0:
            raise ValueError("|alpha| must be < 1")


def estimate_preq_alpha(errors: np.ndarray) -> PartialResponseModel:
    """Fit the whitening coefficient from the error lag-1 autocorrelation.

    The first-order predictor of e_k from e_{k-1} has coefficient
    r(1)/r(0); whitening with 1 + alpha D therefore takes
    alpha = -r(1)/r(0). sigma2 is the whitened residual power.
    """
    errors = np.asarray(errors)
    r0 = float(np.mean(np.abs(errors) ** 2))
    if r0 == 0.0:
        raise ValueError("error sequence has zero power")
    r1 = np.mean(errors[1:] * np.conj(errors[:-1]))
    alpha = float(np.clip(-r1.real / r0, -0.99, 0.99))
    whitened = errors[1:] + alpha * errors[:-1]
    return PartialResponseModel(alpha, float(np.mean(np.abs(whitened) ** 2)))


def preq_filter(symbols: np.ndarray, alpha: float) -> np.ndarray:
    """Apply the 1 + alpha D response: z_k = y_k + alpha y_{k-1}."""
    if not abs(alpha) < 1.0:
        raise ValueError("|alpha| must be < 1")
    z = np.array(symbols, dtype=np.complex128)
    z[..., 1:] += alpha * np.asarray(symbols)[..., :-1]
    return z


@dataclass(frozen=True)
class BcjrResult:
    posteriors: np.ndarray  # (n, M) probabilities
    llrs: np.ndarray  # (n, m) bit log-likelihood ratios


def _bit_llrs_from_logpost(logpost: np.ndarray, shaped: ShapedConstellation) -> np.ndarray:
    labels = shaped.base.labels
    m = labels.shape[1]
    llrs = np.empty((logpost.shape[0], m))
    for i in range(m):
        zero = labels[:, i] == 0
        llrs[:, i] = logsumexp(logpost[:, zero], axis=1) - logsumexp(
            logpost[:, ~zero], axis=1
        )
    return llrs


def bcjr_detect(
    pr_symbols: np.ndarray,
    model: PartialResponseModel,
    shaped: ShapedConstellation,
    allow_large_trellis: bool = False,
) -> BcjrResult:
    """Exact forward-backward detection on the one-memory-tap trellis.

    States are the previous constellation symbol; the branch metric is
    log prior(x_k) - |z_k - x_k - alpha x_{k-1}|^2 / sigma2 with the
    pre-filter's zero start (x_{-1} = 0). Recursions run in the log domain
    with exact log-sum-exp, so posteriors match brute-force enumeration.
    """
    if model.sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    M = shaped.order
    if M > LARGE_TRELLIS_LIMIT and not allow_large_trellis:
        raise ValueError(
            f"{M}-state trellis is gated; pass allow_large_trellis=True to accept the cost"
        )
    if M > LARGE_TRELLIS_LIMIT:
        warnings.warn(
            f"running a {M}-state BCJR trellis; expect it to be slow", stacklevel=2
        )

    z = np.asarray(pr_symbols, dtype=np.complex128)
    n = z.size
    pts = shaped.points
    logprior = shaped.log_probs
    targets = pts[None, :] + model.alpha * pts[:, None]  # [prev, cur]

    fwd = np.empty((n, M))
    fwd[0] = logprior - np.abs(z[0] - pts) ** 2 / model.sigma2
    fwd[0] -= fwd[0].max()
    for k in range(1, n):
        branch = -np.abs(z[k] - targets) ** 2 / model.sigma2
        fwd[k] = logsumexp(fwd[k - 1][:, None] + branch, axis=0) + logprior
        fwd[k] -= fwd[k].max()

    bwd = np.zeros((n, M))
    for k in range(n - 1, 0, -1):
        branch = -np.abs(z[k] - targets) ** 2 / model.sigma2
        bwd[k - 1] = logsumexp(bwd[k][None, :] + logprior[None, :] + branch, axis=1)
        bwd[k - 1] -= bwd[k - 1].max()

    logpost = fwd + bwd
    logpost -= logsumexp(logpost, axis=1, keepdims=True)
    return BcjrResult(np.exp(logpost), _bit_llrs_from_logpost(logpost, shaped))


def soft_demap(
    symbols: np.ndarray, shaped: ShapedConstellation, sigma2: float
) -> np.ndarray:
    """Exact (sum, not max-log) bit LLRs with the shaped prior included."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    y = np.asarray(symbols, dtype=np.complex128).ravel()
    logpost = shaped.log_probs[None, :] - np.abs(y[:, None] - shaped.points[None, :]) ** 2 / sigma2
    return _bit_llrs_from_logpost(logpost, shaped)


@dataclass(frozen=True)
class LLRBlock:
    """Per-bitlevel soft values aligned with the transmitted bits."""

    llrs: np.ndarray  # (n, m)
    tx_bits: np.ndarray  # (n, m)
    entropy_bits: float

    def __post_init__(self):
        if self.llrs.shape != self.tx_bits.shape:
            raise ValueError("LLRs and transmitted bits must align")


def llr_block(
    llrs: np.ndarray, tx_indices: np.ndarray, shaped: ShapedConstellation
) -> LLRBlock:
    """Bundle LLRs with the bit labels of the transmitted symbol indices."""
    bits = shaped.base.labels_for_indices(tx_indices).astype(np.int64)
    return LLRBlock(llrs, bits, shaped.entropy_bits)
