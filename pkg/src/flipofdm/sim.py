"""Monte Carlo BER sweeps over SNR for Flip-OFDM and ACO-OFDM links."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import detection
from .aco_ofdm import AcoTransceiver
from .channel import ChannelModel, apply, frequency_response, sigma_z_for_snr
from .detection import DetectorConfig
from .flip_ofdm import FlipTransceiver
from .numerics import Rng
from .qam import SUPPORTED_ORDERS, analytic_ber, constellation, demodulate, modulate
from .spectral import is_power_of_two

__all__ = [
    "ConfigError",
    "BerRangeError",
    "SweepConfig",
    "BerRecord",
    "run_sweep",
    "simulate_point",
    "stage_snr",
    "complexity_table",
    "horizontal_gain",
    "gain_report",
]

SCHEMES = ("flip", "aco")
_MAX_BATCH = 256


class ConfigError(ValueError):
    """A sweep configuration is invalid."""


class BerRangeError(ValueError):
    """The target BER is not crossed by a BER curve."""


@dataclass(frozen=True)
class SweepConfig:
    scheme: str
    order: int = 16
    n: int = 512
    cp_len: int = 0
    snr_db_points: tuple[float, ...] = (0.0,)
    min_bit_errors: int = 200
    max_bits: int = 10_000_000
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    taps: tuple[float, ...] = (1.0,)
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.order not in SUPPORTED_ORDERS:
            raise ConfigError(f"QAM order must be one of {SUPPORTED_ORDERS}")
        if self.n < 8 or not is_power_of_two(self.n):
            raise ConfigError(f"FFT size must be a power of two >= 8, got {self.n}")
        if not 0 <= self.cp_len <= self.n:
            raise ConfigError("cyclic prefix length must be in [0, N]")
        if not self.snr_db_points:
            raise ConfigError("no SNR points")
        if any(math.isnan(s) or s == -math.inf for s in self.snr_db_points):
            raise ConfigError("SNR points must be finite (or +inf for noiseless)")
        if self.min_bit_errors < 1 or self.max_bits < 1:
            raise ConfigError("min_bit_errors and max_bits must be positive")
        if self.min_bit_errors < 100:
            warnings.warn("fewer than 100 bit errors per point gives a loose BER estimate", stacklevel=2)
        if self.scheme == "aco" and self.detector.stages == "clipper_plus_threshold":
            raise ConfigError("the threshold filter is only defined for Flip-OFDM")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        try:
            ChannelModel(self.taps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if len(self.taps) - 1 > self.cp_len:
            warnings.warn("channel delay spread exceeds the cyclic prefix; expect ISI", stacklevel=2)

    def transceiver(self):
        cls = FlipTransceiver if self.scheme == "flip" else AcoTransceiver
        return cls(self.n, self.cp_len)


@dataclass(frozen=True)
class BerRecord:
    snr_db: float
    scheme: str
    detector: str
    bits_sent: int
    bit_errors: int
    ber_sim: float
    ber_analytic: float
    ci95_halfwidth: float
    analytic_snr_db: float
    threshold_over_sigma_z: float

    @property
    def stderr(self) -> float:
        """Binomial standard error of ``ber_sim`` under the analytic BER."""
        p = self.ber_analytic
        return math.sqrt(p * (1.0 - p) / self.bits_sent) if self.bits_sent else math.inf

    def as_dict(self) -> dict:
        return asdict(self)


def stage_snr(scheme: str, detector: DetectorConfig, sigma_z: float, sigma_x: float) -> float:
    """Linear per-symbol SNR that the analysis predicts after the selected stages.

    The clipper and threshold analyses are for Flip-OFDM subframe pairs; ACO
    links are always predicted at the plain equivalent SNR.
    """
    if sigma_z == 0:
        return math.inf
    base = sigma_x * sigma_x / (2.0 * sigma_z * sigma_z)
    if scheme != "flip" or detector.stages == "plain":
        return base
    if detector.stages == "clipper":
        return detection.snr_nc(sigma_z, sigma_x)
    c = detector.threshold()
    if math.isinf(c):
        return detection.snr_nc(sigma_z, sigma_x)
    return detection.snr_at_threshold(c, sigma_z, sigma_x)


def simulate_point(config: SweepConfig, index: int) -> BerRecord:
    """Run one SNR point on its own random stream until the stopping rule fires.

    Frames are drawn in growing batches but the count is cut at the exact
    frame where ``min_bit_errors`` or ``max_bits`` is reached, so the record
    does not depend on the batch schedule.
    """
    snr_db = float(config.snr_db_points[index])
    trx = config.transceiver()
    const = constellation(config.order)
    k = const.bits_per_symbol
    bits_per_frame = trx.payload_size * k
    sigma_x = math.sqrt(trx.signal_power())
    sigma_z = sigma_z_for_snr(snr_db, sigma_x)
    det = config.detector.with_noise(sigma_z, sigma_x)
    c = det.threshold() if det.uses_threshold else math.inf
    c_norm = det.threshold_over_sigma_z() if det.uses_threshold else math.inf
    chan = ChannelModel(config.taps, sigma_z)
    h = frequency_response(chan, config.n)

    root = Rng(config.seed, index)
    bit_rng, noise_rng = root.child(0), root.child(1)

    bits_sent = 0
    errors = 0
    batch = 1
    while errors < config.min_bit_errors and bits_sent < config.max_bits:
        bits = bit_rng.bits(batch, bits_per_frame)
        wire = trx.transmit(modulate(bits, const))
        rx = apply(chan, wire, noise_rng)
        decided = demodulate(trx.receive(rx, h, det, c), const)
        per_frame = np.count_nonzero(decided != bits, axis=1)
        cum_err = errors + np.cumsum(per_frame)
        cum_bits = bits_sent + bits_per_frame * np.arange(1, batch + 1)
        stop = np.flatnonzero((cum_err >= config.min_bit_errors) | (cum_bits >= config.max_bits))
        last = int(stop[0]) if stop.size else batch - 1
        errors = int(cum_err[last])
        bits_sent = int(cum_bits[last])
        batch = min(2 * batch, _MAX_BATCH)

    snr_lin = stage_snr(config.scheme, det, sigma_z, sigma_x)
    p = errors / bits_sent
    return BerRecord(
        snr_db=snr_db,
        scheme=config.scheme,
        detector=config.detector.stages,
        bits_sent=bits_sent,
        bit_errors=errors,
        ber_sim=p,
        ber_analytic=float(analytic_ber(config.order, snr_lin)),
        ci95_halfwidth=1.959963984540054 * math.sqrt(p * (1.0 - p) / bits_sent),
        analytic_snr_db=10.0 * math.log10(snr_lin) if snr_lin > 0 else -math.inf,
        threshold_over_sigma_z=c_norm,
    )


def _point(args):
    config, index = args
    return simulate_point(config, index)


def run_sweep(config: SweepConfig) -> list[BerRecord]:
    """Simulate every SNR point; records come back in point order."""
    config.validate()
    jobs = [(config, i) for i in range(len(config.snr_db_points))]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_point, jobs))
    return [_point(j) for j in jobs]


def complexity_table(n: int) -> dict:
    """FFT/IFFT operation counts per scheme, with base-2 logarithms."""
    if n < 2 or not is_power_of_two(n):
        raise ConfigError(f"N must be a power of two, got {n}")
    lg = int(math.log2(n))
    row = {
        "n": n,
        "aco_tx": 2 * (n // 2) * (lg - 1),
        "flip_tx": n * lg,
        "aco_rx": 2 * n * lg,
        "flip_rx": n * lg,
    }
    row["rx_saving"] = 1.0 - row["flip_rx"] / row["aco_rx"]
    return row


def _crossing(snr_db: Sequence[float], ber: Sequence[float], target: float) -> float:
    pts = [(s, b) for s, b in sorted(zip(snr_db, ber)) if b > 0 and math.isfinite(s)]
    for (s0, b0), (s1, b1) in zip(pts[:-1], pts[1:]):
        if (b0 - target) * (b1 - target) <= 0 and b0 != b1:
            l0, l1, lt = math.log10(b0), math.log10(b1), math.log10(target)
            return s0 + (lt - l0) * (s1 - s0) / (l1 - l0)
        if b0 == b1 == target:
            return s0
    raise BerRangeError(f"BER curve does not cross {target:g}")


def horizontal_gain(records, reference_records, target_ber: float) -> float:
    """dB by which ``records`` reach ``target_ber`` earlier than the reference."""
    mine = _crossing([r.snr_db for r in records], [r.ber_sim for r in records], target_ber)
    ref = _crossing(
        [r.snr_db for r in reference_records], [r.ber_sim for r in reference_records], target_ber
    )
    return ref - mine


def gain_report(config: SweepConfig, reference_config: SweepConfig, target_ber: float = 1e-4) -> float:
    """Run both sweeps and return the horizontal gain of ``config`` at ``target_ber``."""
    return horizontal_gain(run_sweep(config), run_sweep(reference_config), target_ber)


def snr_grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    """``start:stop:step`` inclusive of ``stop`` when the step divides the span."""
    if step <= 0:
        raise ConfigError("SNR step must be positive")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    if count < 1:
        raise ConfigError("empty SNR range")
    return tuple(round(start + i * step, 10) for i in range(count))
