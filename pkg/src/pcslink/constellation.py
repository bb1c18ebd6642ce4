"""Square QAM alphabets with sign/amplitude bit labels and Maxwell-Boltzmann shaping.

The labeling keeps one sign bit per real dimension so that flipping it negates
that coordinate only: this is the property amplitude-shaping frames rely on.
Amplitude bits use a reflected-binary Gray code over the per-dimension
amplitude index; non-power-of-four orders (324, 400, 484, 576) reuse the
labeling of the enclosing power-of-two grid restricted to the inner levels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64, 256, 324, 400, 484, 576, 1024)

AMPLITUDE_LABELING = "reflected-binary-gray-over-amplitude-index"


def _gray(index: int) -> int:
    return index ^ (index >> 1)


@dataclass(frozen=True)
class Constellation:
    """Square M-QAM grid normalized to unit mean energy under uniform use.

    ``labels`` holds m bits per point, laid out dimension-major:
    [I sign, I amplitude bits..., Q sign, Q amplitude bits...].
    ``amplitude_alphabet`` are the positive per-dimension levels, ascending,
    on the same scale as ``points``.
    """

    order: int
    points: np.ndarray
    labels: np.ndarray
    amplitude_alphabet: np.ndarray

    @property
    def side(self) -> int:
        return int(round(math.sqrt(self.order)))

    @property
    def bits_per_symbol(self) -> int:
        """Bitlevels m per complex symbol (2 per dimension incl. sign)."""
        return self.labels.shape[1]

    @property
    def num_amplitudes(self) -> int:
        return self.side // 2

    @property
    def grid_scale(self) -> float:
        """Spacing factor mapping odd-integer levels onto ``points``."""
        return float(self.amplitude_alphabet[0])

    def index_from_components(self, amp_i, sign_i, amp_q, sign_q) -> np.ndarray:
        """Point index from per-dimension (amplitude index, sign bit) pairs.

        Sign bit 0 selects the positive level, 1 the negative one.
        """
        half = self.side // 2
        amp_i = np.asarray(amp_i, dtype=np.int64)
        amp_q = np.asarray(amp_q, dtype=np.int64)
        sign_i = np.asarray(sign_i, dtype=np.int64)
        sign_q = np.asarray(sign_q, dtype=np.int64)
        li = np.where(sign_i == 0, half + amp_i, half - 1 - amp_i)
        lq = np.where(sign_q == 0, half + amp_q, half - 1 - amp_q)
        return li * self.side + lq

    def components_from_index(self, indices) -> tuple[np.ndarray, ...]:
        """Inverse of :meth:`index_from_components`."""
        indices = np.asarray(indices, dtype=np.int64)
        half = self.side // 2
        li, lq = divmod(indices, self.side)
        sign_i = (li < half).astype(np.int64)
        sign_q = (lq < half).astype(np.int64)
        amp_i = np.where(sign_i == 0, li - half, half - 1 - li)
        amp_q = np.where(sign_q == 0, lq - half, half - 1 - lq)
        return amp_i, sign_i, amp_q, sign_q

    def labels_for_indices(self, indices) -> np.ndarray:
        """Bit labels, shape (len(indices), m)."""
        return self.labels[np.asarray(indices, dtype=np.int64)]


def build_qam(order: int) -> Constellation:
    """Construct a square QAM constellation with PAS-compatible labeling.

    Supported orders are the even perfect squares used by shaping frames
    plus small ones (4, 16, 64, 1024) for oracle-sized tests.
    """
    if order not in SUPPORTED_ORDERS:
        raise ValueError(
            f"unsupported QAM order {order}; expected one of {SUPPORTED_ORDERS}"
        )
    side = int(round(math.sqrt(order)))
    bits_per_dim = math.ceil(math.log2(side))
    amp_bits = bits_per_dim - 1

    levels = 2 * np.arange(side) - (side - 1)  # odd integers, ascending
    scale = 1.0 / math.sqrt(2.0 * (side**2 - 1) / 3.0)
    grid_i, grid_q = np.meshgrid(levels, levels, indexing="ij")
    points = (grid_i + 1j * grid_q).flatten() * scale

    labels = np.empty((order, 2 * bits_per_dim), dtype=np.uint8)
    dim_labels = np.empty((side, bits_per_dim), dtype=np.uint8)
    for idx, level in enumerate(levels):
        amp_index = (abs(int(level)) - 1) // 2
        code = _gray(amp_index)
        dim_labels[idx, 0] = 0 if level > 0 else 1
        for b in range(amp_bits):
            dim_labels[idx, 1 + b] = (code >> (amp_bits - 1 - b)) & 1
    for li in range(side):
        for lq in range(side):
            labels[li * side + lq, :bits_per_dim] = dim_labels[li]
            labels[li * side + lq, bits_per_dim:] = dim_labels[lq]

    amplitude_alphabet = np.arange(1, side, 2, dtype=float) * scale
    return Constellation(order, points, labels, amplitude_alphabet)


@dataclass(frozen=True)
class ShapedConstellation:
    """Constellation plus a Maxwell-Boltzmann point distribution.

    ``probs[i] ∝ exp(-nu * |points[i]|^2)`` on the uniform-normalized grid;
    ``energy_scale`` rescales the points so the shaped mean energy is one.
    """

    base: Constellation
    nu: float
    probs: np.ndarray
    entropy_bits: float
    energy_scale: float

    @property
    def points(self) -> np.ndarray:
        """Constellation points with unit mean energy under ``probs``."""
        return self.base.points * self.energy_scale

    @property
    def order(self) -> int:
        return self.base.order

    @property
    def bits_per_symbol(self) -> int:
        return self.base.bits_per_symbol

    @property
    def log_probs(self) -> np.ndarray:
        return np.log(self.probs)

    def per_dimension_amplitude_probs(self) -> np.ndarray:
        """Probability of each positive per-dimension level, ascending.

        The Maxwell-Boltzmann weights factorize over the two dimensions and
        are symmetric in sign, so this fully determines the distribution.
        """
        levels = self.base.amplitude_alphabet / self.base.grid_scale
        w = np.exp(-self.nu * (self.base.grid_scale * levels) ** 2)
        return w / w.sum()

    def export_json(self) -> str:
        """Serialize points, labels, probabilities and shaping metadata."""
        payload = {
            "order": self.base.order,
            "bits_per_symbol": self.base.bits_per_symbol,
            "nu": self.nu,
            "entropy_bits": self.entropy_bits,
            "energy_scale": self.energy_scale,
            "amplitude_labeling": AMPLITUDE_LABELING,
            "points_re": self.points.real.tolist(),
            "points_im": self.points.imag.tolist(),
            "labels": self.base.labels.tolist(),
            "probs": self.probs.tolist(),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def apply_maxwell_boltzmann(c: Constellation, nu: float) -> ShapedConstellation:
    """Impose probs ∝ exp(-nu |x|^2) and renormalize mean energy to one."""
    if nu < 0:
        raise ValueError(f"shaping rate nu must be >= 0, got {nu}")
    energies = np.abs(c.points) ** 2
    logw = -nu * (energies - energies.min())  # shift avoids underflow at large nu
    w = np.exp(logw)
    probs = w / w.sum()
    entropy = float(-np.sum(probs * np.log2(probs, where=probs > 0)))
    mean_energy = float(np.sum(probs * energies))
    return ShapedConstellation(c, float(nu), probs, entropy, 1.0 / math.sqrt(mean_energy))


def solve_entropy(
    c: Constellation, target_bits: float, tol: float = 1e-9
) -> float:
    """Find the shaping rate nu whose entropy hits ``target_bits``.

    Entropy is strictly decreasing in nu (from log2(M) at nu=0 down to
    2 bits), so a bracket grown by doubling plus bisection suffices.
    """
    max_h = math.log2(c.order)
    if not 2.0 < target_bits <= max_h:
        raise ValueError(
            f"entropy target {target_bits} outside (2, {max_h:.4f}] for M={c.order}"
        )
    if tol <= 0:
        raise ValueError("tolerance must be positive")

    def entropy_at(nu: float) -> float:
        return apply_maxwell_boltzmann(c, nu).entropy_bits

    if abs(entropy_at(0.0) - target_bits) <= tol:
        return 0.0

    lo, hi = 0.0, 1.0
    while entropy_at(hi) > target_bits:
        lo, hi = hi, hi * 2.0
        if hi > 1e12:
            raise RuntimeError("failed to bracket entropy target")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        h = entropy_at(mid)
        if abs(h - target_bits) <= tol:
            return mid
        if h > target_bits:
            lo = mid
        else:
            hi = mid
    raise RuntimeError(f"bisection did not reach tolerance {tol}")


def shaped_qam(order: int, target_bits: float, tol: float = 1e-9) -> ShapedConstellation:
    """Convenience: build the constellation and shape it to a target entropy."""
    c = build_qam(order)
    if target_bits == math.log2(order):
        return apply_maxwell_boltzmann(c, 0.0)
    nu = solve_entropy(c, target_bits, tol)
    return apply_maxwell_boltzmann(c, nu)
