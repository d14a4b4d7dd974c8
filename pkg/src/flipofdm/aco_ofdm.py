"""ACO-OFDM: odd-subcarrier loading, asymmetric clipping, direct detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import equalize
from .detection import DetectorConfig, negative_clip
from .flip_ofdm import UnipolarSubframe, _check_size
from .numerics import DomainError
from .spectral import forward_dft, inverse_dft

__all__ = ["AcoFrame", "AcoTransceiver", "build_aco_frame", "aco_transmit", "aco_receive"]


@dataclass(frozen=True, eq=False)
class AcoFrame:
    """Frame with data on odd bins 1, 3, ..., N/2-1, zeros on every even bin,
    and Hermitian mirroring onto the upper half."""

    n: int
    x: np.ndarray

    @property
    def payload_indices(self) -> np.ndarray:
        return np.arange(1, self.n // 2, 2)

    @property
    def payload(self) -> np.ndarray:
        return self.x[..., 1 : self.n // 2 : 2]


def aco_spectrum(payload, n: int) -> np.ndarray:
    _check_size(n)
    payload = np.asarray(payload, dtype=complex)
    if payload.shape[-1] != n // 4:
        raise DomainError(f"payload must hold {n // 4} symbols, got {payload.shape[-1]}")
    x = np.zeros(payload.shape[:-1] + (n,), dtype=complex)
    odd = np.arange(1, n // 2, 2)
    x[..., odd] = payload
    x[..., n - odd] = np.conj(payload)
    return x


def build_aco_frame(payload, n: int) -> AcoFrame:
    return AcoFrame(n, aco_spectrum(payload, n))


def aco_transmit(payload, n: int, cp_len: int) -> UnipolarSubframe:
    x = inverse_dft(aco_spectrum(payload, n)).real
    return UnipolarSubframe.from_body(np.maximum(x, 0.0), cp_len, "clipped")


def aco_receive(y, channel_freq_response, detector: DetectorConfig | None = None):
    h = np.asarray(channel_freq_response)
    n = h.shape[-1]
    y = np.asarray(y, dtype=float)
    if y.shape[-1] < n:
        raise DomainError("received block shorter than N")
    trx = AcoTransceiver(n, y.shape[-1] - n)
    return trx.receive(y, h, detector or DetectorConfig())


@dataclass(frozen=True)
class AcoTransceiver:
    """Batched ACO-OFDM link end points; one ``cp_len + N`` block per frame."""

    scheme = "aco"

    n: int
    cp_len: int = 0

    def __post_init__(self) -> None:
        _check_size(self.n)
        if not 0 <= self.cp_len <= self.n:
            raise DomainError(f"cyclic prefix length must be in [0, N], got {self.cp_len}")

    @property
    def payload_size(self) -> int:
        return self.n // 4

    @property
    def payload_bins(self) -> np.ndarray:
        return np.arange(1, self.n // 2, 2)

    @property
    def wire_length(self) -> int:
        return self.n + self.cp_len

    def signal_power(self, symbol_energy: float = 1.0) -> float:
        """Expected mean square of the unclipped bipolar symbol."""
        return 2.0 * self.payload_size * symbol_energy

    def transmit(self, payload) -> np.ndarray:
        x = np.maximum(inverse_dft(aco_spectrum(payload, self.n)).real, 0.0)
        return np.concatenate([x[..., self.n - self.cp_len :], x], axis=-1)

    def receive(self, wire, h, detector: DetectorConfig, c: float | None = None) -> np.ndarray:
        if detector.stages == "clipper_plus_threshold":
            raise DomainError("the threshold filter needs subframe pairs; ACO-OFDM has none")
        wire = np.asarray(wire, dtype=float)
        if wire.shape[-1] != self.wire_length:
            raise DomainError(f"expected {self.wire_length} samples per frame, got {wire.shape[-1]}")
        body = wire[..., self.cp_len :]
        if detector.stages == "clipper":
            body = negative_clip(body)
        r = forward_dft(body)
        # clipping halves the odd-bin amplitudes
        return 2.0 * equalize(r, h, self.payload_bins)
