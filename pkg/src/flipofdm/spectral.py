"""Radix-2 DFT pair.

``inverse_dft`` is the plain sum ``x(k) = sum_n X_n exp(+j 2 pi n k / N)``
with no scaling; ``forward_dft`` carries the ``1/N`` so the pair round-trips.
Both transform along the last axis and accept arbitrary leading batch axes.

A process-wide counter records how many length-N vectors went through each
direction, which lets tests check how many transforms a receiver performs.
"""

from __future__ import annotations

import threading
from collections import Counter
from contextlib import contextmanager
from functools import lru_cache

import numpy as np

from .numerics import DomainError

__all__ = [
    "inverse_dft",
    "forward_dft",
    "is_power_of_two",
    "transform_counts",
    "count_transforms",
]

_counts: Counter = Counter()
_lock = threading.Lock()


def transform_counts() -> dict[str, int]:
    with _lock:
        return dict(_counts)


@contextmanager
def count_transforms():
    """Yield a dict that, on exit, holds the transforms done inside the block."""
    before = transform_counts()
    delta: dict[str, int] = {}
    try:
        yield delta
    finally:
        after = transform_counts()
        for key in ("forward", "inverse"):
            delta[key] = after.get(key, 0) - before.get(key, 0)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(n: int, sign: int) -> tuple[np.ndarray, ...]:
    out = []
    m = 1
    while m < n:
        out.append(np.exp(sign * 2j * np.pi * np.arange(m) / (2 * m)))
        m *= 2
    return tuple(out)


def _radix2(values, sign: int, direction: str) -> np.ndarray:
    x = np.asarray(values, dtype=complex)
    if x.ndim == 0:
        raise DomainError("transform input must be a vector")
    n = x.shape[-1]
    if n < 8 or not is_power_of_two(n):
        raise DomainError(f"transform length must be a power of two >= 8, got {n}")
    lead = x.shape[:-1]
    # decimation in time: bit-reversed load, then log2(n) butterfly stages
    x = x[..., _bit_reverse(n)]
    m = 1
    for w in _twiddles(n, sign):
        x = x.reshape(lead + (n // (2 * m), 2, m))
        even = x[..., 0, :]
        odd = x[..., 1, :] * w
        x = np.concatenate([even + odd, even - odd], axis=-1)
        m *= 2
    with _lock:
        _counts[direction] += int(np.prod(lead, dtype=np.int64)) if lead else 1
    return x.reshape(lead + (n,))


def inverse_dft(freq) -> np.ndarray:
    """Unnormalized inverse transform along the last axis."""
    return _radix2(freq, +1, "inverse")


def forward_dft(time) -> np.ndarray:
    """Forward transform along the last axis, scaled by 1/N."""
    out = _radix2(time, -1, "forward")
    return out / out.shape[-1]
