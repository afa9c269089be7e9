"""Byte-oriented range coder over 16-bit cumulative-count tables.

This is the carry-less ("Russian") range coder: 32-bit low/range state,
bytes released when the top byte of low and low+range agree, range truncated
on underflow. Total counts are fixed at 2^16, so the shrink step is a pair
of shifts and multiplies.

The flush writes exactly two bytes: the top half of the smallest multiple
of 2^16 inside the final interval. The decoder reads missing look-ahead
bytes as zeros, which reproduces that value exactly, and verifies at the
end that the payload length matches what the encoder must have written.
An empty symbol sequence therefore codes to a fixed 2-byte terminator-only
payload.
"""

from __future__ import annotations

from bisect import bisect_right

import numpy as np

from .errors import BitstreamError
from .gaussian import CDF_TOTAL, CdfTable

_PRECISION = 32
_TOP = 1 << (_PRECISION - 8)
_BOTTOM = 1 << (_PRECISION - 16)
_MASK = (1 << _PRECISION) - 1

# 256-way uniform table used for raw ("bypass") bytes.
_BYPASS_CDF = list(range(0, CDF_TOTAL + 1, CDF_TOTAL // 256))


class RangeEncoder:
    def __init__(self):
        self._low = 0
        self._range = _MASK
        self._out = bytearray()

    def encode(self, index: int, cdf) -> None:
        """Code one symbol under a cumulative table (total 2^16)."""
        c = cdf[index]
        d = cdf[index + 1]
        if d <= c:
            raise BitstreamError(f"symbol {index} has zero width in cdf")
        r = self._range >> 16
        self._low += c * r
        self._range = r * (d - c)
        low, rng = self._low, self._range
        while True:
            if (low ^ (low + rng)) < _TOP:
                pass
            elif rng < _BOTTOM:
                rng = ((1 << _PRECISION) - low) & (_BOTTOM - 1)
            else:
                break
            self._out.append((low >> 24) & 0xFF)
            low = (low << 8) & _MASK
            rng = (rng << 8)
        self._low, self._range = low, rng

    def encode_bypass16(self, value: int) -> None:
        """Code an unsigned 16-bit value as two uniform bytes."""
        if not 0 <= value < 65536:
            raise BitstreamError(f"bypass value {value} out of 16-bit range")
        self.encode(value >> 8, _BYPASS_CDF)
        self.encode(value & 0xFF, _BYPASS_CDF)

    def finish(self) -> bytes:
        # Smallest multiple of 2^16 inside [low, low+range); its top two
        # bytes pin the interval once the decoder zero-pads the rest.
        v = ((self._low + _BOTTOM - 1) >> 16) << 16
        self._out.append((v >> 24) & 0xFF)
        self._out.append((v >> 16) & 0xFF)
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._low = 0
        self._range = _MASK
        self._state = 0
        for _ in range(4):
            self._state = (self._state << 8) | self._next_byte()

    def _next_byte(self) -> int:
        b = self._data[self._pos] if self._pos < len(self._data) else 0
        self._pos += 1
        return b

    def decode(self, cdf) -> int:
        r = self._range >> 16
        target = (self._state - self._low) // r
        if target > CDF_TOTAL - 1:
            target = CDF_TOTAL - 1
        elif target < 0:
            target = 0
        index = bisect_right(cdf, target) - 1
        c = cdf[index]
        d = cdf[index + 1]
        self._low += c * r
        self._range = r * (d - c)
        low, rng, state = self._low, self._range, self._state
        while True:
            if (low ^ (low + rng)) < _TOP:
                pass
            elif rng < _BOTTOM:
                rng = ((1 << _PRECISION) - low) & (_BOTTOM - 1)
            else:
                break
            state = ((state << 8) | self._next_byte()) & _MASK
            low = (low << 8) & _MASK
            rng = (rng << 8)
        self._low, self._range, self._state = low, rng, state
        return index

    def decode_bypass16(self) -> int:
        hi = self.decode(_BYPASS_CDF)
        lo = self.decode(_BYPASS_CDF)
        return (hi << 8) | lo

    def finish(self) -> None:
        """Verify the payload is exactly as long as the encoder wrote."""
        expected = max(2, self._pos - 2)
        if len(self._data) != expected:
            raise BitstreamError(
                f"range-coded payload length {len(self._data)} != expected {expected} "
                f"(corrupt at byte {min(self._pos, len(self._data))})"
            )


def _as_cdf_list(cdf):
    if isinstance(cdf, CdfTable):
        return cdf.cdf.tolist()
    if isinstance(cdf, np.ndarray):
        return cdf.tolist()
    return cdf


def rc_encode(symbols, cdfs) -> bytes:
    """Losslessly code a symbol-index sequence, one cdf per symbol."""
    enc = RangeEncoder()
    for s, cdf in zip(symbols, cdfs, strict=True):
        enc.encode(int(s), _as_cdf_list(cdf))
    return enc.finish()


def rc_decode(data: bytes, cdfs) -> list[int]:
    """Inverse of rc_encode; raises BitstreamError on length mismatch."""
    if len(data) < 2:
        raise BitstreamError(f"range-coded payload too short ({len(data)} bytes)")
    dec = RangeDecoder(data)
    out = [dec.decode(_as_cdf_list(cdf)) for cdf in cdfs]
    dec.finish()
    return out
