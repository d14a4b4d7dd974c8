"""Enhanced Flip-OFDM detection and its noise analysis.

Two nonlinear stages act on each pair of time samples ``(y1, y2)`` taken
from the positive and negative subframes, before the FFT:

1. a negative clipper, ``[y]^+``;
2. a threshold filter that, when the pair differs by more than ``c``,
   keeps only the larger sample and treats the other as noise.

The analysis side models one pair with the signal in ``y1``: ``y1 = x + z1``,
``y2 = z2``, where ``x`` is half-normal with scale ``sigma_x`` and
``z1, z2 ~ N(0, sigma_z**2)``. Noise powers are per sample, i.e. half the
mean squared error of the recombined value, so without any filtering they
reduce to ``sigma_z**2`` and ``SNR = sigma_x**2 / (2 * noise power)``.

All noise powers are evaluated by quadrature of the conditional moments;
`monte_carlo_sigma2_eq` gives an independent estimate of the same
quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .numerics import (
    SQRT2,
    SQRT2PI,
    DomainError,
    MinimizeResult,
    QuadratureSpec,
    Rng,
    erfc,
    gauss_legendre_grid,
    integrate_1d,
    minimize_scalar,
    norm_cdf,
    norm_pdf,
)

__all__ = [
    "STAGES",
    "THRESHOLD_POLICIES",
    "DetectorConfig",
    "NoiseReport",
    "negative_clip",
    "threshold_filter",
    "combine_pair",
    "conditional_clip_moments",
    "conditional_sigma2_nc",
    "sigma2_nc",
    "sigma2_nc_closed_form",
    "snr_nc",
    "conditional_sigma2_eq",
    "sigma2_eq",
    "snr_at_threshold",
    "local_threshold_minimum",
    "optimal_threshold",
    "approx_threshold",
    "snr_tot",
    "noise_report",
    "threshold_table",
    "closed_form_report",
    "monte_carlo_sigma2_eq",
    "THRESHOLD_TABLE_COLUMNS",
]

STAGES = ("plain", "clipper", "clipper_plus_threshold")
THRESHOLD_POLICIES = ("optimal", "approximate", "fixed", "disabled")

# c is searched over (0, C_MAX_SIGMAS * sigma_z]
C_MAX_SIGMAS = 20.0
# approximate-threshold fit: (a, b, m, n) and the SNR (dB) where it diverges
_FIT_A, _FIT_B, _FIT_M, _FIT_N = 0.9336, 0.03341, 0.4875, 0.3982
FIT_ONSET_DB = 4.5

_DEFAULT_QUAD = QuadratureSpec(relative_tolerance=1e-9, truncation_sigmas=12.0)


# --------------------------------------------------------------------------
# receiver stages
# --------------------------------------------------------------------------


def negative_clip(y):
    return np.maximum(np.asarray(y, dtype=float), 0.0)


def threshold_filter(y1t, y2t, c):
    """Threshold rule on a clipped pair, elementwise.

    ``y1t - y2t > c`` keeps ``y1t``; ``y2t - y1t > c`` gives ``-y2t``;
    otherwise the plain difference. ``c = inf`` never triggers.
    """
    y1t = np.asarray(y1t, dtype=float)
    y2t = np.asarray(y2t, dtype=float)
    if np.any(np.asarray(c) < 0):
        raise DomainError("threshold must be nonnegative")
    d = y1t - y2t
    out = np.where(d > c, y1t, np.where(-d > c, -y2t, d))
    return float(out) if out.ndim == 0 else out


def combine_pair(y1, y2, stages: str, c: float = math.inf) -> np.ndarray:
    """Recombine received subframe bodies through the selected stages."""
    if stages == "plain":
        return np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float)
    y1t, y2t = negative_clip(y1), negative_clip(y2)
    if stages == "clipper":
        return y1t - y2t
    if stages == "clipper_plus_threshold":
        return threshold_filter(y1t, y2t, c)
    raise DomainError(f"unknown detector stages {stages!r}")


@dataclass(frozen=True)
class DetectorConfig:
    """Which receiver stages run and how the threshold is chosen.

    ``threshold_value`` is in units of ``sigma_z`` and is only read for the
    ``fixed`` policy. ``sigma_z`` / ``sigma_x`` are the known noise and
    bipolar-signal deviations; they are needed to resolve the ``optimal`` and
    ``approximate`` policies.
    """

    stages: str = "plain"
    threshold_policy: str = "optimal"
    threshold_value: float | None = None
    sigma_z: float | None = None
    sigma_x: float | None = None

    def __post_init__(self) -> None:
        if self.stages not in STAGES:
            raise DomainError(f"stages must be one of {STAGES}, got {self.stages!r}")
        if self.threshold_policy not in THRESHOLD_POLICIES:
            raise DomainError(f"unknown threshold policy {self.threshold_policy!r}")
        if self.threshold_policy == "fixed":
            if self.threshold_value is None or not self.threshold_value >= 0:
                raise DomainError("fixed threshold needs a value >= 0")

    @property
    def uses_threshold(self) -> bool:
        return self.stages == "clipper_plus_threshold" and self.threshold_policy != "disabled"

    def with_noise(self, sigma_z: float, sigma_x: float) -> "DetectorConfig":
        return replace(self, sigma_z=sigma_z, sigma_x=sigma_x)

    def threshold_over_sigma_z(self) -> float:
        """Resolved ``c / sigma_z``; ``inf`` means the filter never fires."""
        if not self.uses_threshold:
            return math.inf
        if self.threshold_policy == "fixed":
            return float(self.threshold_value)
        if self.sigma_z is None or self.sigma_x is None:
            raise DomainError("sigma_z and sigma_x are required to resolve the threshold")
        if self.sigma_z == 0:
            return math.inf
        ratio = self.sigma_x / self.sigma_z
        snr_db = 10.0 * math.log10(ratio * ratio / 2.0)
        if self.threshold_policy == "approximate":
            return approx_threshold(snr_db)
        return _optimal_threshold_normalized(round(ratio, 12))

    def threshold(self) -> float:
        """Resolved threshold in signal units."""
        t = self.threshold_over_sigma_z()
        if math.isinf(t):
            return math.inf
        return t * (self.sigma_z or 0.0)

    def combine(self, y1, y2, c: float | None = None) -> np.ndarray:
        if c is None:
            c = self.threshold() if self.uses_threshold else math.inf
        return combine_pair(y1, y2, self.stages, c)


# --------------------------------------------------------------------------
# clipper analysis
# --------------------------------------------------------------------------


def _check_scales(sigma_z, sigma_x=1.0) -> None:
    if not (sigma_z > 0 and sigma_x > 0):
        raise DomainError("sigma_z and sigma_x must be positive")


def conditional_clip_moments(x, sigma_z):
    """``(E[(y1t - x)^2], E[y1t - x])`` for ``y1t = [x + z]^+``, given ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("x must be nonnegative")
    _check_scales(sigma_z)
    tail = erfc(x / (SQRT2 * sigma_z))
    bump = sigma_z * np.exp(-x * x / (2.0 * sigma_z * sigma_z)) / SQRT2PI
    m2 = 0.5 * (x * x - sigma_z * sigma_z) * tail - x * bump + sigma_z * sigma_z
    m1 = bump - 0.5 * x * tail
    if m2.ndim == 0:
        return float(m2), float(m1)
    return m2, m1


def conditional_sigma2_nc(x, sigma_z):
    """Per-sample noise power after clipping, given the signal amplitude ``x``.

    Uses independence of the two clipped samples: the noise-only sample has
    mean ``sigma_z / sqrt(2 pi)`` and second moment ``sigma_z**2 / 2``.
    """
    m2, m1 = conditional_clip_moments(x, sigma_z)
    return 0.5 * m2 + 0.25 * sigma_z * sigma_z - m1 * sigma_z / SQRT2PI


def half_normal_pdf(x, sigma_x):
    return np.where(
        np.asarray(x) >= 0,
        SQRT2 / (math.sqrt(math.pi) * sigma_x) * np.exp(-np.square(x) / (2.0 * sigma_x**2)),
        0.0,
    )


def sigma2_nc(sigma_z, sigma_x, quad: QuadratureSpec = _DEFAULT_QUAD) -> float:
    """Clipper output noise power, averaged over the half-normal signal."""
    _check_scales(sigma_z, sigma_x)
    return integrate_1d(
        lambda x: conditional_sigma2_nc(x, sigma_z) * half_normal_pdf(x, sigma_x),
        0.0,
        math.inf,
        quad,
        scale=sigma_x,
        points=[sigma_z * k for k in (1.0, 3.0, 6.0)],
    )


def sigma2_nc_closed_form(sigma_z, sigma_x) -> float:
    """Alternative closed-form expression for the averaged clipper noise power.

    Kept for side-by-side reporting only; it does not agree with the
    quadrature of the conditional moments. It tends to ``sigma_z**2 / 2`` for
    large ``sigma_x``, whereas averaging the conditional moments tends to
    ``3 sigma_z**2 / 4``.
    """
    _check_scales(sigma_z, sigma_x)
    total = sigma_z * sigma_z + sigma_x * sigma_x
    return sigma_z * sigma_z / 2.0 + (
        -sigma_z * math.sqrt(total) + total * math.atan(sigma_z / sigma_x)
    ) / (2.0 * math.pi)


def snr_nc(sigma_z, sigma_x, quad: QuadratureSpec = _DEFAULT_QUAD) -> float:
    return sigma_x * sigma_x / (2.0 * sigma2_nc(sigma_z, sigma_x, quad))


# --------------------------------------------------------------------------
# threshold analysis
# --------------------------------------------------------------------------


def _partial_moments(lo, hi, sigma):
    """Moments 0..2 of the N(0, sigma^2) density restricted to [lo, hi].

    ``hi`` may be ``inf``; ``lo`` is finite.
    """
    ul = lo / sigma
    finite = np.isfinite(hi)
    uh = np.where(finite, hi, 0.0) / sigma
    pl = norm_pdf(ul)
    ph = np.where(finite, norm_pdf(uh), 0.0)
    m0 = np.where(finite, norm_cdf(uh), 1.0) - norm_cdf(ul)
    m1 = sigma * (pl - ph)
    m2 = sigma * sigma * (m0 + ul * pl - uh * ph)
    return m0, m1, m2


def _squared_error_given_y1(a, x, c, sigma_z):
    """``E[(filter(a, y2t) - x)^2 | y1t = a]`` averaged over the clipped ``y2t``.

    ``y2t`` has an atom of 1/2 at zero and the N(0, sigma_z^2) density on
    (0, inf). The atom always lands in the ``a``-output regions, and the
    continuous part splits into: keep ``a`` for ``y2t < a - c``, the
    difference for ``|a - y2t| <= c``, and ``-y2t`` for ``y2t > a + c``.
    """
    d = a - x
    zero = np.zeros_like(a)
    cut = np.maximum(zero, a - c)
    keep0, _, _ = _partial_moments(zero, cut, sigma_z)
    diff0, diff1, diff2 = _partial_moments(cut, a + c, sigma_z)
    flip0, flip1, flip2 = _partial_moments(a + c, np.full_like(a, np.inf), sigma_z)
    return (
        (0.5 + keep0) * d * d
        + d * d * diff0 - 2.0 * d * diff1 + diff2
        + flip2 + 2.0 * x * flip1 + x * x * flip0
    )


def conditional_sigma2_eq(c, sigma_z, x, quad: QuadratureSpec = _DEFAULT_QUAD):
    """Per-sample noise power after clipper and threshold filter, given ``x``.

    The ``y1t`` atom at zero (mass ``erfc(x / (sqrt 2 sigma_z)) / 2``) is a
    discrete term; its continuous part is integrated on a Gauss-Legendre grid
    split at ``y1t = c``, vectorized over ``x``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if math.isinf(c):
        return conditional_sigma2_nc(x, sigma_z)
    span = quad.truncation_sigmas * sigma_z
    lo = np.maximum(0.0, x - span)
    hi = x + span
    mid = np.clip(c, lo, hi)
    a_low, w_low = gauss_legendre_grid(lo, mid, panels=3)
    a_high, w_high = gauss_legendre_grid(mid, hi, panels=6)
    a = np.concatenate([a_low, a_high], axis=1)
    w = np.concatenate([w_low, w_high], axis=1)
    xc = x[:, None]
    dens = norm_pdf((a - xc) / sigma_z) / sigma_z
    continuous = np.sum(w * dens * _squared_error_given_y1(a, xc, c, sigma_z), axis=1)
    atom = norm_cdf(-x / sigma_z) * _squared_error_given_y1(np.zeros_like(x), x, c, sigma_z)
    return 0.5 * (atom + continuous)


def sigma2_eq(c, sigma_z, sigma_x, quad: QuadratureSpec = _DEFAULT_QUAD) -> float:
    """Per-sample noise power after both stages, averaged over the signal."""
    _check_scales(sigma_z, sigma_x)
    if not c >= 0:
        raise DomainError("threshold must be nonnegative")
    if math.isinf(c):
        return sigma2_nc(sigma_z, sigma_x, quad)
    return integrate_1d(
        lambda x: conditional_sigma2_eq(c, sigma_z, x, quad) * half_normal_pdf(x, sigma_x),
        0.0,
        math.inf,
        quad,
        scale=sigma_x,
        points=[c, c + 2.0 * sigma_z, c + 6.0 * sigma_z, 3.0 * sigma_z],
    )


def snr_at_threshold(c, sigma_z, sigma_x, quad: QuadratureSpec = _DEFAULT_QUAD) -> float:
    return sigma_x * sigma_x / (2.0 * sigma2_eq(c, sigma_z, sigma_x, quad))


_SCAN = np.concatenate([np.arange(0.1, 3.0, 0.1), np.arange(3.0, C_MAX_SIGMAS + 0.5, 1.0)])


def local_threshold_minimum(
    sigma_z, sigma_x, quad: QuadratureSpec = _DEFAULT_QUAD, tol: float = 1e-4
) -> MinimizeResult:
    """Best threshold inside (0, 20 sigma_z], ignoring the ``c -> inf`` limit.

    A coarse scan picks the best grid cell (the noise power is not unimodal
    over the whole bracket at low SNR), then golden-section refines it to
    ``tol`` of the full bracket width.
    """
    _check_scales(sigma_z, sigma_x)
    f = lambda c: sigma2_eq(c, sigma_z, sigma_x, quad)  # noqa: E731
    grid = _SCAN * sigma_z
    values = np.array([f(c) for c in grid])
    i = int(np.argmin(values))
    lo = grid[i - 1] if i > 0 else 0.0
    hi = grid[i + 1] if i + 1 < grid.size else grid[i]
    if hi <= lo:
        return MinimizeResult(float(grid[i]), float(values[i]), True)
    step_tol = tol * (C_MAX_SIGMAS * sigma_z) / (hi - lo)
    res = minimize_scalar(f, (lo, hi), tol=min(step_tol, 0.5))
    at_edge = res.at_boundary and (res.argmin in (0.0, grid[-1]))
    return MinimizeResult(res.argmin, res.minimum, at_edge)


@lru_cache(maxsize=512)
def _optimal_threshold_normalized(ratio: float) -> float:
    res = local_threshold_minimum(1.0, ratio)
    nc = sigma2_nc(1.0, ratio)
    slack = 1e3 * _DEFAULT_QUAD.relative_tolerance * nc
    if res.minimum < nc - slack:
        return res.argmin
    return math.inf


def _check_snr(snr_db, sigma_z, sigma_x) -> None:
    _check_scales(sigma_z, sigma_x)
    implied = 10.0 * math.log10(sigma_x * sigma_x / (2.0 * sigma_z * sigma_z))
    if abs(implied - snr_db) > 1e-6 * max(1.0, abs(snr_db)):
        raise DomainError(
            f"snr_db={snr_db} is inconsistent with sigma_x/sigma_z (implies {implied:.6f} dB)"
        )


def optimal_threshold(snr_db, sigma_z, sigma_x) -> float:
    """Noise-minimizing threshold in signal units, or ``inf`` if no finite
    threshold beats the clipper alone."""
    _check_snr(snr_db, sigma_z, sigma_x)
    t = _optimal_threshold_normalized(round(sigma_x / sigma_z, 12))
    return t * sigma_z


def approx_threshold(snr_db) -> float:
    """Curve-fit threshold ``c / sigma_z`` for an SNR in dB; inf below 4.5 dB."""
    if snr_db < FIT_ONSET_DB:
        return math.inf
    t = snr_db - FIT_ONSET_DB
    return 0.75 * (t**_FIT_N + _FIT_A) / (t**_FIT_M + _FIT_B)


def snr_tot(sigma_z, sigma_x, quad: QuadratureSpec = _DEFAULT_QUAD) -> float:
    """Per-sample SNR with both stages at the optimal threshold."""
    snr_db = 10.0 * math.log10(sigma_x * sigma_x / (2.0 * sigma_z * sigma_z))
    c = optimal_threshold(snr_db, sigma_z, sigma_x)
    if math.isinf(c):
        return snr_nc(sigma_z, sigma_x, quad)
    return snr_at_threshold(c, sigma_z, sigma_x, quad)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseReport:
    snr_db: float
    sigma2_nc: float
    sigma2_eq: float
    c_opt: float
    snr_nc: float
    snr_tot: float

    @property
    def gain_clipper_db(self) -> float:
        return 10.0 * math.log10(self.snr_nc / 10 ** (self.snr_db / 10))

    @property
    def gain_total_db(self) -> float:
        return 10.0 * math.log10(self.snr_tot / 10 ** (self.snr_db / 10))


def noise_report(snr_db: float, sigma_z: float = 1.0) -> NoiseReport:
    """Noise powers and SNRs at ``snr_db``; powers are in units of ``sigma_z**2``
    when ``sigma_z`` is left at 1."""
    sigma_x = sigma_z * math.sqrt(2.0 * 10 ** (snr_db / 10.0))
    nc = sigma2_nc(sigma_z, sigma_x)
    c = optimal_threshold(snr_db, sigma_z, sigma_x)
    eq = nc if math.isinf(c) else sigma2_eq(c, sigma_z, sigma_x)
    sx2 = sigma_x * sigma_x
    return NoiseReport(snr_db, nc, eq, c, sx2 / (2.0 * nc), sx2 / (2.0 * eq))


THRESHOLD_TABLE_COLUMNS = (
    "snr_db",
    "c_opt_over_sigma_z",
    "c_approx_over_sigma_z",
    "sigma2_nc",
    "sigma2_eq_opt",
    "gain_clipper_db",
    "gain_total_db",
)


def threshold_table(snr_points) -> list[dict]:
    """One row per SNR with thresholds in units of sigma_z and powers in sigma_z**2."""
    rows = []
    for snr_db in snr_points:
        rep = noise_report(float(snr_db))
        rows.append(
            {
                "snr_db": float(snr_db),
                "c_opt_over_sigma_z": rep.c_opt,
                "c_approx_over_sigma_z": approx_threshold(float(snr_db)),
                "sigma2_nc": rep.sigma2_nc,
                "sigma2_eq_opt": rep.sigma2_eq,
                "gain_clipper_db": rep.gain_clipper_db,
                "gain_total_db": rep.gain_total_db,
            }
        )
    return rows


def monte_carlo_sigma2_eq(
    c, sigma_z, sigma_x, trials: int, rng: Rng, chunk: int = 1_000_000
) -> tuple[float, float]:
    """Sampled per-sample noise power ``E[(y - x)^2] / 2`` and its standard error.

    Draws half-normal ``x`` and two Gaussian noise samples, clips, applies
    the threshold rule (``c = inf`` is the clipper alone).
    """
    gen = rng.generator
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        x = np.abs(gen.normal(0.0, sigma_x, n))
        y1 = np.maximum(x + gen.normal(0.0, sigma_z, n), 0.0)
        y2 = np.maximum(gen.normal(0.0, sigma_z, n), 0.0)
        e = 0.5 * (threshold_filter(y1, y2, c) - x) ** 2
        total += e.sum()
        total_sq += np.square(e).sum()
        done += n
    mean = float(total) / trials
    var = max(float(total_sq) / trials - mean * mean, 0.0)
    return mean, math.sqrt(var / trials)


def closed_form_report(snr_points, trials: int = 2_000_000, seed: int = 23) -> list[dict]:
    """Quadrature, alternative closed form and Monte Carlo clipper noise side by side."""
    rows = []
    for i, snr_db in enumerate(snr_points):
        sigma_x = math.sqrt(2.0 * 10 ** (snr_db / 10.0))
        quad_val = sigma2_nc(1.0, sigma_x)
        closed = sigma2_nc_closed_form(1.0, sigma_x)
        mc, se = monte_carlo_sigma2_eq(math.inf, 1.0, sigma_x, trials, Rng(seed, i))
        rows.append(
            {
                "snr_db": float(snr_db),
                "sigma2_nc_quadrature": quad_val,
                "sigma2_nc_closed_form": closed,
                "sigma2_nc_monte_carlo": mc,
                "monte_carlo_stderr": se,
                "quadrature_vs_mc_sigmas": (quad_val - mc) / se,
                "closed_form_vs_mc_sigmas": (closed - mc) / se,
            }
        )
    return rows
