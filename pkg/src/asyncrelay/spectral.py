"""Block transforms and cyclic-prefix primitives for OFDM symbols.

All transforms use the unitary convention, i.e. a 1/sqrt(N) factor on both
directions. That symmetric scaling is what makes conjugation swap the two
transforms,

    conj(dft(x)) == idft(conj(x)),      conj(idft(x)) == dft(conj(x)),

and makes the circular-reversal identity

    dft(reverse(dft(x))) == x,          dft(reverse(x)) == idft(x)

hold exactly. ``reverse`` is the circular index reversal n -> (N - n) mod N,
which fixes sample 0 and reverses the rest; it is the N-point body operation
realised by a relay that time-reverses a cyclic-prefixed symbol.

Block lengths are restricted to powers of two (radix-2 transform). Every
function acts along the last axis and broadcasts over any leading axes.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "add_cp",
    "dft",
    "idft",
    "remove_cp",
    "reverse",
    "shift_tail_to_head",
]

# (n, sign) -> (bit-reversal index vector, per-stage twiddle factors)
_PLAN_CACHE: dict[tuple[int, int], tuple[np.ndarray, list[np.ndarray]]] = {}


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _plan(n: int, sign: int) -> tuple[np.ndarray, list[np.ndarray]]:
    key = (n, sign)
    plan = _PLAN_CACHE.get(key)
    if plan is None:
        bits = n.bit_length() - 1
        idx = np.arange(n)
        rev = np.zeros(n, dtype=np.intp)
        for b in range(bits):
            rev |= ((idx >> b) & 1) << (bits - 1 - b)
        twiddles = []
        half = 1
        while half < n:
            twiddles.append(np.exp(sign * 2j * np.pi * np.arange(half) / (2 * half)))
            half *= 2
        plan = (rev, twiddles)
        _PLAN_CACHE[key] = plan
    return plan


def _transform(block: np.ndarray, sign: int) -> np.ndarray:
    """Radix-2 decimation-in-time transform along the last axis, unnormalised."""
    x = np.asarray(block, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_power_of_two(n):
        raise ValueError(f"block length {n} is not a power of two")
    rev, twiddles = _plan(n, sign)
    y = x[..., rev]
    half = 1
    for w in twiddles:
        y = y.reshape(y.shape[:-1] + (n // (2 * half), 2 * half))
        even = y[..., :half]
        odd = y[..., half:] * w
        y = np.concatenate((even + odd, even - odd), axis=-1)
        y = y.reshape(y.shape[:-2] + (n,))
        half *= 2
    return y


def dft(block: np.ndarray) -> np.ndarray:
    """Unitary discrete Fourier transform along the last axis."""
    x = np.asarray(block)
    return _transform(x, -1) * (1.0 / math.sqrt(x.shape[-1]))


def idft(block: np.ndarray) -> np.ndarray:
    """Unitary inverse discrete Fourier transform along the last axis."""
    x = np.asarray(block)
    return _transform(x, +1) * (1.0 / math.sqrt(x.shape[-1]))


def reverse(block: np.ndarray) -> np.ndarray:
    """Circular index reversal: output n holds input (N - n) mod N."""
    x = np.asarray(block)
    if x.shape[-1] < 1:
        raise ValueError("cannot reverse an empty block")
    return np.roll(x[..., ::-1], 1, axis=-1)


def add_cp(block: np.ndarray, cp_len: int) -> np.ndarray:
    """Prepend the last ``cp_len`` samples of the block as a cyclic prefix."""
    x = np.asarray(block)
    n = x.shape[-1]
    if not 0 <= cp_len < n:
        raise ValueError(f"cyclic prefix length {cp_len} must lie in [0, {n})")
    if cp_len == 0:
        return x.copy()
    return np.concatenate((x[..., n - cp_len:], x), axis=-1)


def remove_cp(block: np.ndarray, cp_len: int) -> np.ndarray:
    """Drop the leading ``cp_len`` samples, returning the symbol body."""
    x = np.asarray(block)
    total = x.shape[-1]
    if cp_len < 0 or 2 * cp_len >= total:
        raise ValueError(f"cyclic prefix length {cp_len} invalid for {total}-sample block")
    return x[..., cp_len:]


def shift_tail_to_head(block: np.ndarray, cp_len: int) -> np.ndarray:
    """Move the last ``cp_len`` samples to the front (circular right shift)."""
    x = np.asarray(block)
    n = x.shape[-1]
    if not 0 <= cp_len < n:
        raise ValueError(f"shift length {cp_len} must lie in [0, {n})")
    return np.roll(x, cp_len, axis=-1)
