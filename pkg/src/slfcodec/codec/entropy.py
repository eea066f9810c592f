"""Uniform scalar quantization and adaptive Exp-Golomb coding of levels.

A plane of signed levels is zigzag-mapped onto non-negative integers and
written with an order-``k`` Exp-Golomb code, MSB first, zero-padded to a
whole byte.  ``k`` in [0, 31] is picked per plane to minimize the payload
and stored in a one-byte prefix.
"""

from __future__ import annotations

import numpy as np

from ..errors import CorruptStream, InvalidArgument

MAX_K = 31
# zigzag values must stay below this so that value + 2**k fits in 63 bits
_MAX_SYMBOL = (1 << 62) - 1


def quantize(values, q: float):
    """``round(F / Q)`` with halves rounded away from zero."""
    if not q > 0:
        raise InvalidArgument(f"quantization step must be positive, got {q}")
    x = np.asarray(values, dtype=float) / q
    levels = np.sign(x) * np.floor(np.abs(x) + 0.5)
    if np.ndim(levels) == 0:
        return int(levels)
    return levels.astype(np.int64)


def dequantize(levels, q: float):
    if not q > 0:
        raise InvalidArgument(f"quantization step must be positive, got {q}")
    out = np.asarray(levels, dtype=float) * q
    return float(out) if out.ndim == 0 else out


def zigzag(levels) -> np.ndarray:
    n = np.asarray(levels, dtype=np.int64)
    return np.where(n >= 0, 2 * n, -2 * n - 1).astype(np.uint64)


def unzigzag(symbols) -> np.ndarray:
    z = np.asarray(symbols, dtype=np.uint64)
    half = (z >> np.uint64(1)).astype(np.int64)
    return np.where(z & np.uint64(1), -half - 1, half)


def _bit_length(x: np.ndarray) -> np.ndarray:
    """Bit length of non-negative uint64 values (0 for 0)."""
    x = x.astype(np.uint64)
    out = np.frexp(x.astype(float))[1].astype(np.int64)
    # float rounding can carry into the next power of two above 2**53
    over = (out > 0) & ((x >> np.maximum(out - 1, 0).astype(np.uint64)) == 0)
    return out - over


def codeword_lengths(symbols, k: int) -> np.ndarray:
    """Exp-Golomb order-``k`` code length of each non-negative symbol."""
    m = np.asarray(symbols, dtype=np.uint64) + np.uint64(1 << k)
    return 2 * _bit_length(m) - k - 1


def best_order(symbols) -> tuple[int, int]:
    """The ``k`` minimizing total bits (ties go to the smaller k) and that total."""
    best = None
    for k in range(MAX_K + 1):
        bits = int(codeword_lengths(symbols, k).sum())
        if best is None or bits < best[1]:
            best = (k, bits)
    return best


def _pack(symbols: np.ndarray, k: int) -> bytes:
    m = symbols + np.uint64(1 << k)
    lengths = 2 * _bit_length(m) - k - 1
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]) if lengths.size else lengths
    total = int(lengths.sum())
    bits = np.zeros(total, dtype=np.uint8)
    nbits = _bit_length(m)
    # a codeword is m written in exactly `length` bits: leading zeros, then m
    for b in range(int(nbits.max()) if nbits.size else 0):
        sel = nbits > b
        bit = ((m[sel] >> np.uint64(b)) & np.uint64(1)).astype(np.uint8)
        bits[starts[sel] + lengths[sel] - 1 - b] = bit
    return np.packbits(bits).tobytes()


def entropy_encode(levels, k: int | None = None) -> bytes:
    """Zigzag + Exp-Golomb; the first byte of the result is ``k``."""
    symbols = zigzag(levels).reshape(-1)
    if symbols.size and int(symbols.max()) > _MAX_SYMBOL:
        raise InvalidArgument("level magnitude too large to code")
    if k is None:
        k = best_order(symbols)[0] if symbols.size else 0
    if not 0 <= k <= MAX_K:
        raise InvalidArgument(f"Exp-Golomb order must lie in [0, {MAX_K}], got {k}")
    return bytes([k]) + _pack(symbols, k)


def entropy_decode(data: bytes, count: int) -> np.ndarray:
    """Decode exactly ``count`` levels from a k-prefixed payload."""
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    if len(data) < 1:
        raise CorruptStream("missing Exp-Golomb order prefix")
    k = data[0]
    if k > MAX_K:
        raise CorruptStream(f"invalid Exp-Golomb order {k}")
    raw = np.frombuffer(data, dtype=np.uint8, offset=1)
    bits = np.unpackbits(raw)
    total = bits.size
    # next_one[p]: first position >= p holding a 1 bit (total if none)
    marks = np.where(bits == 1, np.arange(total), total)
    next_one = np.minimum.accumulate(marks[::-1])[::-1]
    # window[p]: the 64 bits starting at bit p, as an unsigned integer
    padded = np.concatenate([raw, np.zeros(9, dtype=np.uint8)]).astype(np.uint64)
    byte_idx = np.arange(total) >> 3
    word = np.zeros(total, dtype=np.uint64)
    for i in range(8):
        word = (word << np.uint64(8)) | padded[byte_idx + i]
    off = (np.arange(total) & 7).astype(np.uint64)
    window = (word << off) | (padded[byte_idx + 8] >> (np.uint64(8) - off))
    nxt = next_one.tolist()
    win = window.tolist()
    out = [0] * count
    p = 0
    base = 1 << k
    for i in range(count):
        q = nxt[p] if p < total else total
        if q >= total:
            raise CorruptStream(f"stream truncated at symbol {i} of {count}")
        length = 2 * (q - p) + k + 1
        width = q - p + k + 1
        if p + length > total:
            raise CorruptStream(f"stream truncated at symbol {i} of {count}")
        if width > 64:
            raise CorruptStream("codeword too long")
        out[i] = (win[q] >> (64 - width)) - base
        p += length
    return unzigzag(np.array(out, dtype=np.uint64))
