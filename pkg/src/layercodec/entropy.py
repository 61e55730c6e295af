"""Adaptive range coding shared by the lossless plane codec and the residual coder.

32-bit renormalizing range coder (carry handling via a pending-byte cache)
plus an order-0 adaptive frequency model. Model totals stay below 2^16 so
``range // total`` never collapses during renormalization at the 2^24
threshold.
"""

from __future__ import annotations

from .errors import BitstreamError

_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF
_BOUND = 0xFF000000


class RangeEncoder:
    """Single-use byte-oriented range encoder."""

    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()

    def _shift_low(self):
        low = self.low
        if low < _BOUND or low > _MASK32:
            carry = low >> 32
            out = self.out
            out.append((self.cache + carry) & 0xFF)
            if self.cache_size > 1:
                out.extend(((carry + 0xFF) & 0xFF,) * (self.cache_size - 1))
            self.cache = (low >> 24) & 0xFF
            self.cache_size = 0
        self.cache_size += 1
        self.low = (low & 0x00FFFFFF) << 8

    def encode(self, start: int, freq: int, total: int):
        r = self.range // total
        self.low += r * start
        self.range = r * freq
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def encode_raw(self, value: int, nbits: int):
        """Write nbits of value (MSB first) at fixed probability 1/2."""
        for shift in range(nbits - 1, -1, -1):
            self.range >>= 1
            if (value >> shift) & 1:
                self.low += self.range
            if self.range < _TOP:
                self.range <<= 8
                self._shift_low()

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self.out)


class RangeDecoder:
    """Single-use decoder; reading past the payload yields zero bytes."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 1  # first payload byte is the encoder's initial zero cache
        self.range = _MASK32
        code = 0
        for _ in range(4):
            code = (code << 8) | self._next_byte()
        self.code = code
        self._r = 0

    def _next_byte(self) -> int:
        pos = self.pos
        if pos >= len(self.data):
            self.pos = pos + 1
            return 0
        self.pos = pos + 1
        return self.data[pos]

    def decode_freq(self, total: int) -> int:
        self._r = r = self.range // total
        val = self.code // r
        return total - 1 if val >= total else val

    def decode_update(self, start: int, freq: int):
        r = self._r
        self.code -= r * start
        self.range = r * freq
        while self.range < _TOP:
            self.code = (self.code << 8) | self._next_byte()
            self.range <<= 8

    def decode_raw(self, nbits: int) -> int:
        value = 0
        for _ in range(nbits):
            self.range >>= 1
            bit = 1 if self.code >= self.range else 0
            if bit:
                self.code -= self.range
            value = (value << 1) | bit
            if self.range < _TOP:
                self.code = (self.code << 8) | self._next_byte()
                self.range <<= 8
        return value


class AdaptiveModel:
    """Order-0 adaptive symbol distribution over a small alphabet."""

    __slots__ = ("freq", "total", "increment", "limit")

    def __init__(self, nsymbols: int, increment: int = 32, limit: int = 1 << 13):
        if nsymbols < 1:
            raise ValueError("empty alphabet")
        if limit >= 1 << 16:
            raise ValueError("total limit must stay below 2^16")
        self.freq = [1] * nsymbols
        self.total = nsymbols
        self.increment = increment
        self.limit = limit

    def encode(self, enc: RangeEncoder, symbol: int):
        freq = self.freq
        start = 0
        for i in range(symbol):
            start += freq[i]
        enc.encode(start, freq[symbol], self.total)
        self._bump(symbol)

    def decode(self, dec: RangeDecoder) -> int:
        val = dec.decode_freq(self.total)
        freq = self.freq
        cum = 0
        sym = 0
        while cum + freq[sym] <= val:
            cum += freq[sym]
            sym += 1
        dec.decode_update(cum, freq[sym])
        self._bump(sym)
        return sym

    def _bump(self, symbol: int):
        self.freq[symbol] += self.increment
        self.total += self.increment
        if self.total >= self.limit:
            total = 0
            freq = self.freq
            for i, f in enumerate(freq):
                f = (f + 1) >> 1
                freq[i] = f
                total += f
            self.total = total


def check_payload(data: bytes, minimum: int = 5):
    if len(data) < minimum:
        raise BitstreamError(f"payload truncated to {len(data)} bytes")
