"""Scalar numerics shared by the analysis and the simulator.

Everything here works on plain floats or numpy arrays: the complementary
error function and standard normal helpers, seeded Gaussian sampling with
independent streams, adaptive Gauss-Kronrod quadrature, a Gauss-Legendre
panel grid for nested integrals, and golden-section minimization.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import special

__all__ = [
    "DomainError",
    "NumericError",
    "Rng",
    "QuadratureSpec",
    "MinimizeResult",
    "erfc",
    "norm_pdf",
    "norm_cdf",
    "gaussian_sample",
    "integrate_1d",
    "gauss_legendre_grid",
    "minimize_scalar",
]

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class NumericError(ArithmeticError):
    """A numerical procedure failed to reach its tolerance.

    ``estimate`` holds the best value obtained before giving up.
    """

    def __init__(self, message: str, estimate: float = math.nan):
        super().__init__(message)
        self.estimate = estimate


# --------------------------------------------------------------------------
# special functions
# --------------------------------------------------------------------------


def erfc(u):
    """Complementary error function, elementwise.

    Accepts a float or an array; non-finite input raises `DomainError`.
    """
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("erfc argument must be finite")
    out = special.erfc(arr)
    return float(out) if out.ndim == 0 else out


def norm_pdf(u):
    """Standard normal density."""
    return np.exp(-0.5 * np.square(u)) / SQRT2PI


def norm_cdf(u):
    """Standard normal CDF. ``+inf``/``-inf`` are allowed and map to 1/0."""
    arr = np.asarray(u, dtype=float)
    out = special.ndtr(arr)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# random streams
# --------------------------------------------------------------------------


@dataclass
class Rng:
    """Seeded random stream.

    Streams are keyed by ``(seed, stream_id)`` through numpy's
    `SeedSequence` spawn keys, so the same pair always replays the same
    sequence and different stream ids are independent. `child` derives
    further sub-streams without consuming from this one.
    """

    seed: int
    stream_id: int = 0
    _path: tuple[int, ...] = field(default=(), repr=False)
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise DomainError("seed and stream_id must be 64-bit unsigned integers")

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(
                self.seed, spawn_key=(self.stream_id,) + self._path
            )
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def child(self, index: int) -> "Rng":
        return Rng(self.seed, self.stream_id, self._path + (int(index),))

    def bits(self, rows: int, length: int) -> np.ndarray:
        """``(rows, length)`` uniform bits.

        Each row is cut from its own 64-bit raw words, so drawing rows in one
        call or one at a time gives the same stream.
        """
        words = -(-length // 64)
        raw = self.generator.bit_generator.random_raw(size=(rows, words))
        as_bytes = np.ascontiguousarray(raw.astype("<u8")).view(np.uint8)
        return np.unpackbits(as_bytes, axis=-1)[:, :length]


def gaussian_sample(rng: Rng, sigma: float, size=None):
    """Draw from N(0, sigma**2); a float when ``size`` is None."""
    if not sigma >= 0:
        raise DomainError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return 0.0 if size is None else np.zeros(size)
    out = rng.generator.normal(0.0, sigma, size=size)
    return float(out) if size is None else out


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    relative_tolerance: float = 1e-9
    truncation_sigmas: float = 10.0
    max_intervals: int = 4000

    def __post_init__(self) -> None:
        if not self.relative_tolerance > 0:
            raise DomainError("relative_tolerance must be positive")
        if not self.truncation_sigmas >= 8:
            raise DomainError("truncation_sigmas must be at least 8")


# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk15(f, a: float, b: float) -> tuple[float, float]:
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * _NODES
    fx = np.asarray(f(x), dtype=float)
    if fx.shape != x.shape:
        fx = np.broadcast_to(fx, x.shape)
    kronrod = half * float(_WK @ fx)
    gauss = half * float(_WG15 @ fx)
    return kronrod, abs(kronrod - gauss)


def integrate_1d(
    f: Callable,
    lower: float,
    upper: float,
    spec: QuadratureSpec = QuadratureSpec(),
    *,
    scale: float = 1.0,
    points: Sequence[float] = (),
) -> float:
    """Globally adaptive Gauss-Kronrod integral of ``f`` over [lower, upper].

    ``f`` is called with a numpy array of abscissae and must return values of
    the same shape. An infinite ``upper`` is truncated at
    ``lower + spec.truncation_sigmas * scale``; ``points`` are interior
    breakpoints (kinks, peaks) to split on. Raises `NumericError` carrying
    the best estimate if the interval budget runs out.
    """
    if math.isinf(upper):
        upper = lower + spec.truncation_sigmas * scale
    if not (math.isfinite(lower) and math.isfinite(upper)):
        raise DomainError("integration limits must be finite after truncation")
    if upper == lower:
        return 0.0
    sign = 1.0
    if upper < lower:
        lower, upper, sign = upper, lower, -1.0

    edges = sorted({lower, upper, *(p for p in points if lower < p < upper)})
    heap: list[tuple[float, float, float, float]] = []
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = _gk15(f, a, b)
        total += val
        err += e
        heapq.heappush(heap, (-e, a, b, val))

    n = len(heap)
    while err > spec.relative_tolerance * abs(total) and err > 1e-300:
        if n >= spec.max_intervals:
            raise NumericError(
                f"quadrature did not converge (error estimate {err:.3g})",
                estimate=sign * total,
            )
        neg_e, a, b, val = heapq.heappop(heap)
        mid = 0.5 * (a + b)
        v1, e1 = _gk15(f, a, mid)
        v2, e2 = _gk15(f, mid, b)
        total += v1 + v2 - val
        err += e1 + e2 + neg_e
        heapq.heappush(heap, (-e1, a, mid, v1))
        heapq.heappush(heap, (-e2, mid, b, v2))
        n += 1
    return sign * total


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre_grid(lo, hi, panels: int, order: int = 32):
    """Composite Gauss-Legendre nodes and weights, one row per interval.

    ``lo`` and ``hi`` are arrays of shape (n,). Each [lo[i], hi[i]] is cut
    into ``panels`` equal panels with an ``order``-point rule. Returns
    ``(nodes, weights)`` of shape (n, panels * order); an empty interval
    gets zero weights. Used for the inner integral of nested quadrature,
    vectorized over the outer abscissae.
    """
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    u, w = _GL_CACHE[order]
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    h = (hi - lo) / panels
    starts = lo[:, None] + h[:, None] * np.arange(panels)[None, :]
    nodes = starts[:, :, None] + h[:, None, None] * (0.5 * (u + 1.0))
    weights = np.broadcast_to(0.5 * h[:, None, None] * w, nodes.shape)
    n = lo.shape[0]
    return nodes.reshape(n, -1), weights.reshape(n, -1)


# --------------------------------------------------------------------------
# scalar minimization
# --------------------------------------------------------------------------


class MinimizeResult(NamedTuple):
    argmin: float
    minimum: float
    at_boundary: bool


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def minimize_scalar(
    f: Callable[[float], float], bracket: tuple[float, float], tol: float = 1e-4
) -> MinimizeResult:
    """Golden-section search for the minimum of a unimodal ``f``.

    Stops once the bracket has shrunk below ``tol * (hi - lo)``. The two
    end points are evaluated as well; when one of them is at least as low as
    the interior estimate it is returned with ``at_boundary=True``.
    """
    lo, hi = map(float, bracket)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise DomainError(f"invalid bracket {bracket!r}")
    if not tol > 0:
        raise DomainError("tol must be positive")
    width = (hi - lo) * tol
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > width:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x, fx = (c, fc) if fc < fd else (d, fd)
    if not math.isfinite(fx):
        raise NumericError("objective is not finite at the minimizer", estimate=x)
    f_lo, f_hi = f(lo), f(hi)
    if f_hi <= fx and f_hi <= f_lo:
        return MinimizeResult(hi, f_hi, True)
    if f_lo <= fx:
        return MinimizeResult(lo, f_lo, True)
    return MinimizeResult(x, fx, False)
