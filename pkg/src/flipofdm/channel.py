"""Unipolar baseband channel: nonnegative FIR taps plus white Gaussian noise."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import DomainError, Rng, gaussian_sample

__all__ = [
    "ChannelModel",
    "apply",
    "equivalent_snr",
    "sigma_z_for_snr",
    "frequency_response",
    "db_to_linear",
    "equalize",
    "EqualizationError",
    "linear_to_db",
]


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(lin)


@dataclass(frozen=True)
class ChannelModel:
    """Nonnegative, unit-energy FIR taps and per-sample noise deviation."""

    taps: tuple[float, ...] = (1.0,)
    sigma_z: float = 0.0

    def __post_init__(self) -> None:
        taps = tuple(float(t) for t in self.taps)
        if not taps:
            raise DomainError("channel needs at least one tap")
        if any(t < 0 or not math.isfinite(t) for t in taps):
            raise DomainError("channel taps must be finite and nonnegative")
        energy = sum(t * t for t in taps)
        if energy == 0:
            raise DomainError("channel taps are all zero")
        if abs(energy - 1.0) > 1e-9:
            warnings.warn(
                f"channel taps have energy {energy:.6g}; normalizing to 1",
                stacklevel=3,
            )
            taps = tuple(t / math.sqrt(energy) for t in taps)
        object.__setattr__(self, "taps", taps)
        if not self.sigma_z >= 0:
            raise DomainError("sigma_z must be nonnegative")

    @classmethod
    def from_config(cls, taps: Sequence[float] = (1.0,), *, snr_db: float, sigma_x: float):
        """Channel whose noise gives ``snr_db`` for a bipolar signal of RMS ``sigma_x``."""
        return cls(tuple(taps), sigma_z_for_snr(snr_db, sigma_x))

    def with_noise(self, sigma_z: float) -> "ChannelModel":
        return ChannelModel(self.taps, sigma_z)

    @property
    def delay_spread(self) -> int:
        return len(self.taps) - 1


def apply(channel: ChannelModel, x, rng: Rng | None = None) -> np.ndarray:
    """Convolve along the last axis (output truncated to input length), then add noise.

    The first ``len(taps) - 1`` samples see only a partial convolution;
    with a long enough cyclic prefix they fall inside the prefix.
    """
    x = np.asarray(x, dtype=float)
    y = channel.taps[0] * x
    for d, tap in enumerate(channel.taps[1:], start=1):
        if tap and d < x.shape[-1]:
            y[..., d:] += tap * x[..., :-d]
    if channel.sigma_z > 0:
        if rng is None:
            raise DomainError("a noisy channel needs an Rng")
        y = y + gaussian_sample(rng, channel.sigma_z, size=y.shape)
    return y


def equivalent_snr(sigma_x: float, sigma_z: float) -> float:
    """Per-received-sample SNR ``sigma_x**2 / (2 sigma_z**2)``; inf when noiseless."""
    if sigma_z < 0 or sigma_x < 0:
        raise DomainError("standard deviations must be nonnegative")
    if sigma_z == 0:
        return math.inf
    return sigma_x * sigma_x / (2.0 * sigma_z * sigma_z)


def sigma_z_for_snr(snr_db: float, sigma_x: float) -> float:
    """Inverse of `equivalent_snr` for an SNR given in dB."""
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return sigma_x / math.sqrt(2.0 * float(db_to_linear(snr_db)))


def frequency_response(channel: ChannelModel, n: int) -> np.ndarray:
    """Subcarrier gains ``H_n = sum_d h_d exp(-j 2 pi n d / N)``."""
    if len(channel.taps) > n:
        raise DomainError("more taps than subcarriers")
    taps = np.asarray(channel.taps)
    delays = np.arange(taps.shape[0])
    bins = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(bins, delays) / n) @ taps


class EqualizationError(ArithmeticError):
    """A payload subcarrier has zero channel gain."""


def equalize(r, h, bins) -> np.ndarray:
    """One-tap zero-forcing on the selected bins: ``r[..., bins] / h[bins]``."""
    gains = np.asarray(h)[bins]
    if np.any(np.abs(gains) < 1e-12):
        raise EqualizationError("channel response vanishes on a payload subcarrier")
    return np.asarray(r)[..., bins] / gains
