"""Gray-coded square M-QAM and its textbook bit error rate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numerics import DomainError, erfc

__all__ = ["Constellation", "constellation", "modulate", "demodulate", "analytic_ber"]

SUPPORTED_ORDERS = (4, 16, 64, 256)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit-energy square QAM with an independent Gray code per axis.

    ``points[label]`` is the symbol carrying ``label``; the label's upper
    half of bits selects the in-phase level and the lower half the
    quadrature level, both most significant bit first.
    """

    order: int
    points: np.ndarray
    levels: np.ndarray
    level_labels: np.ndarray
    scale: float

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.order))

    @property
    def bit_labels(self) -> np.ndarray:
        return np.arange(self.order)

    @property
    def average_energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))


@lru_cache(maxsize=None)
def constellation(order: int) -> Constellation:
    if order not in SUPPORTED_ORDERS:
        raise DomainError(f"unsupported QAM order {order}; use one of {SUPPORTED_ORDERS}")
    side = math.isqrt(order)
    idx = np.arange(side)
    # level index -> Gray label, and the inverse table for mapping
    gray = idx ^ (idx >> 1)
    level_of_label = np.empty(side, dtype=np.intp)
    level_of_label[gray] = idx
    scale = math.sqrt(2.0 * (order - 1) / 3.0)
    levels = (2 * idx - side + 1) / scale
    half = int(math.log2(side))
    labels = np.arange(order)
    i_amp = levels[level_of_label[labels >> half]]
    q_amp = levels[level_of_label[labels & (side - 1)]]
    points = i_amp + 1j * q_amp
    points.setflags(write=False)
    levels.setflags(write=False)
    gray.setflags(write=False)
    return Constellation(order, points, levels, gray, scale)


def _as_constellation(c) -> Constellation:
    return c if isinstance(c, Constellation) else constellation(int(c))


def modulate(bits, const) -> np.ndarray:
    """Map a flat (or trailing-axis) bit array onto QAM symbols."""
    const = _as_constellation(const)
    k = const.bits_per_symbol
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] % k:
        raise DomainError(f"bit count {bits.shape[-1]} is not a multiple of {k}")
    groups = bits.reshape(bits.shape[:-1] + (-1, k))
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = groups.astype(np.intp) @ weights
    return const.points[labels]


def _slice_axis(values: np.ndarray, const: Constellation) -> np.ndarray:
    """Nearest level index per value; exact midpoints go to the lower label."""
    side = const.levels.shape[0]
    pos = (values * const.scale + side - 1) / 2.0
    lower = np.clip(np.floor(pos), 0, side - 2).astype(np.intp)
    frac = pos - lower
    tie = np.abs(frac - 0.5) <= 1e-12
    pick_upper = (frac > 0.5) & ~tie
    labels = const.level_labels
    pick_upper |= tie & (labels[lower + 1] < labels[lower])
    return lower + pick_upper


def demodulate(symbols, const) -> np.ndarray:
    """Minimum-distance hard decisions back to bits."""
    const = _as_constellation(const)
    symbols = np.atleast_1d(np.asarray(symbols, dtype=complex))
    k = const.bits_per_symbol
    half = k // 2
    gi = const.level_labels[_slice_axis(symbols.real, const)]
    gq = const.level_labels[_slice_axis(symbols.imag, const)]
    labels = (gi << half) | gq
    shifts = np.arange(k - 1, -1, -1)
    bits = (labels[..., None] >> shifts) & 1
    return bits.reshape(symbols.shape[:-1] + (-1,)).astype(np.uint8)


def analytic_ber(order: int, snr):
    """Nearest-neighbour Gray QAM bit error rate at linear per-symbol SNR.

    ``(2/log2 M)(1 - 1/sqrt M) erfc(sqrt(3 snr / (2 (M-1))))``
    """
    if order not in SUPPORTED_ORDERS:
        raise DomainError(f"unsupported QAM order {order}")
    snr_arr = np.asarray(snr, dtype=float)
    if np.any(snr_arr < 0):
        raise DomainError("snr must be non-negative")
    pref = 2.0 / math.log2(order) * (1.0 - 1.0 / math.sqrt(order))
    with np.errstate(invalid="ignore"):
        arg = np.sqrt(3.0 * snr_arr / (2.0 * (order - 1)))
    out = pref * np.where(np.isinf(arg), 0.0, erfc(np.where(np.isinf(arg), 0.0, arg)))
    return float(out) if out.ndim == 0 else out
