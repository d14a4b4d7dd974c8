"""Flip-OFDM transmitter and receiver.

A Hermitian-symmetric frame gives a real bipolar symbol. Its positive part
goes out in a first subframe and its sign-flipped negative part in a second
one, each with its own cyclic prefix. The receiver subtracts the two bodies
(optionally through the detector stages), runs one FFT and equalizes.

The module-level functions work on single frames with small dataclasses;
`FlipTransceiver` does the same on arrays with a leading batch axis and is
what the simulator uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .channel import equalize
from .detection import DetectorConfig
from .numerics import DomainError
from .spectral import forward_dft, inverse_dft, is_power_of_two

__all__ = [
    "OfdmFrame",
    "UnipolarSubframe",
    "FlipTransceiver",
    "build_frame",
    "bipolar_signal",
    "split_flip",
    "recombine",
    "flip_transmit",
    "flip_receive",
    "write_waveform",
    "read_waveform",
]


def _check_size(n: int) -> None:
    if n < 8 or not is_power_of_two(n):
        raise DomainError(f"transform size must be a power of two >= 8, got {n}")


@dataclass(frozen=True, eq=False)
class OfdmFrame:
    """Frequency-domain frame with ``X[0] = X[N/2] = 0`` and ``X[N-n] = conj(X[n])``."""

    n: int
    x: np.ndarray

    @property
    def payload_indices(self) -> np.ndarray:
        return np.arange(1, self.n // 2)

    @property
    def payload(self) -> np.ndarray:
        return self.x[..., 1 : self.n // 2]


@dataclass(frozen=True, eq=False)
class UnipolarSubframe:
    """Nonnegative subframe body with its cyclic prefix."""

    cp: np.ndarray
    body: np.ndarray
    polarity: str

    @classmethod
    def from_body(cls, body, cp_len: int, polarity: str) -> "UnipolarSubframe":
        body = np.asarray(body, dtype=float)
        if cp_len < 0 or cp_len > body.shape[-1]:
            raise DomainError(f"cyclic prefix length {cp_len} out of range")
        cp = body[..., body.shape[-1] - cp_len :]
        return cls(cp.copy(), body, polarity)

    @property
    def samples(self) -> np.ndarray:
        return np.concatenate([self.cp, self.body], axis=-1)

    @property
    def energy(self) -> float:
        return float(np.sum(np.square(self.body)))


def hermitian_frame(payload, n: int) -> np.ndarray:
    """Place ``payload[..., :N/2-1]`` on bins 1..N/2-1 and mirror it."""
    _check_size(n)
    payload = np.asarray(payload, dtype=complex)
    if payload.shape[-1] != n // 2 - 1:
        raise DomainError(f"payload must hold {n // 2 - 1} symbols, got {payload.shape[-1]}")
    x = np.zeros(payload.shape[:-1] + (n,), dtype=complex)
    x[..., 1 : n // 2] = payload
    x[..., n // 2 + 1 :] = np.conj(payload[..., ::-1])
    return x


def build_frame(payload, n: int) -> OfdmFrame:
    return OfdmFrame(n, hermitian_frame(payload, n))


def bipolar_signal(frame: OfdmFrame) -> np.ndarray:
    """Real time-domain symbol of a frame."""
    x = inverse_dft(frame.x)
    rms = math.sqrt(float(np.mean(np.abs(x) ** 2))) or 1.0
    if np.max(np.abs(x.imag), initial=0.0) > 1e-10 * rms:
        raise DomainError("frame is not Hermitian: time signal has an imaginary part")
    return x.real


def split_flip(x, cp_len: int = 0) -> tuple[UnipolarSubframe, UnipolarSubframe]:
    """Positive part and flipped negative part as two unipolar subframes."""
    x = np.asarray(x, dtype=float)
    pos = np.maximum(x, 0.0)
    neg = np.maximum(-x, 0.0)
    return (
        UnipolarSubframe.from_body(pos, cp_len, "positive"),
        UnipolarSubframe.from_body(neg, cp_len, "negative"),
    )


def recombine(y1, y2) -> np.ndarray:
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if y1.shape != y2.shape:
        raise DomainError(f"subframe shapes differ: {y1.shape} vs {y2.shape}")
    return y1 - y2


def flip_transmit(payload, n: int, cp_len: int) -> tuple[UnipolarSubframe, UnipolarSubframe]:
    return split_flip(bipolar_signal(build_frame(payload, n)), cp_len)


def flip_receive(pos_rx, neg_rx, channel_freq_response, detector: DetectorConfig | None = None):
    """Recover the payload symbols from two received subframes (prefix included)."""
    h = np.asarray(channel_freq_response)
    n = h.shape[-1]
    pos_rx = np.asarray(pos_rx, dtype=float)
    neg_rx = np.asarray(neg_rx, dtype=float)
    if pos_rx.shape != neg_rx.shape or pos_rx.shape[-1] < n:
        raise DomainError("received subframes must both have length cp_len + N")
    cp_len = pos_rx.shape[-1] - n
    trx = FlipTransceiver(n, cp_len)
    wire = np.concatenate([pos_rx, neg_rx], axis=-1)
    return trx.receive(wire, h, detector or DetectorConfig())


@dataclass(frozen=True)
class FlipTransceiver:
    """Batched Flip-OFDM link end points.

    The wire format for one frame is ``[cp+, body+, cp-, body-]``, length
    ``2 (cp_len + N)``.
    """

    scheme = "flip"

    n: int
    cp_len: int = 0

    def __post_init__(self) -> None:
        _check_size(self.n)
        if not 0 <= self.cp_len <= self.n:
            raise DomainError(f"cyclic prefix length must be in [0, N], got {self.cp_len}")

    @property
    def payload_size(self) -> int:
        return self.n // 2 - 1

    @property
    def payload_bins(self) -> np.ndarray:
        return np.arange(1, self.n // 2)

    @property
    def wire_length(self) -> int:
        return 2 * (self.n + self.cp_len)

    def signal_power(self, symbol_energy: float = 1.0) -> float:
        """Expected mean square of the bipolar symbol for iid payload."""
        return 2.0 * self.payload_size * symbol_energy

    def transmit(self, payload) -> np.ndarray:
        x = inverse_dft(hermitian_frame(payload, self.n)).real
        pos = np.maximum(x, 0.0)
        neg = np.maximum(-x, 0.0)
        d = self.cp_len
        return np.concatenate(
            [pos[..., self.n - d :], pos, neg[..., self.n - d :], neg], axis=-1
        )

    def receive(self, wire, h, detector: DetectorConfig, c: float | None = None) -> np.ndarray:
        wire = np.asarray(wire, dtype=float)
        if wire.shape[-1] != self.wire_length:
            raise DomainError(f"expected {self.wire_length} samples per frame, got {wire.shape[-1]}")
        d, n = self.cp_len, self.n
        y1 = wire[..., d : d + n]
        y2 = wire[..., 2 * d + n :]
        y = detector.combine(y1, y2, c)
        r = forward_dft(y)
        return equalize(r, h, self.payload_bins)


def write_waveform(subframes: Iterable[UnipolarSubframe | np.ndarray], fh: TextIO) -> None:
    """One decimal sample per line, each subframe introduced by a ``#`` line."""
    for i, sub in enumerate(subframes):
        if isinstance(sub, UnipolarSubframe):
            label, samples = sub.polarity, sub.samples
        else:
            label, samples = "unipolar", np.asarray(sub, dtype=float)
        fh.write(f"# subframe {i} {label} {samples.shape[-1]}\n")
        for v in samples:
            fh.write(f"{float(v):.17g}\n")


def read_waveform(fh: TextIO) -> list[np.ndarray]:
    blocks: list[list[float]] = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            blocks.append([])
            continue
        if not blocks:
            blocks.append([])
        blocks[-1].append(float(line))
    return [np.array(b) for b in blocks]
