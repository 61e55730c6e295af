"""Lossless plane codec for the profile stream and the feature stream.

Pipeline per channel: MED spatial prediction (median of left, above,
left+above-aboveleft, with out-of-frame neighbors read as 0), residual
wraparound fold to unsigned, then magnitude-class coding: the bit length
of the folded residual goes through an adaptive model, the bits below the
leading one are written raw. A CRC of the raw samples rides in the header
so corruption is always loud.

Byte layout of a coded plane (big-endian):

    offset  size  field
    0       4     magic "LCP1"
    4       1     bit depth (8 or 16)
    5       1     channels (1 or 3)
    6       1     predictor id (0 = MED)
    7       1     reserved, 0
    8       4     width
    12      4     height
    16      4     CRC-32 of raw samples (canonical byte order)
    20      4     payload length
    24      -     range-coded payload
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .entropy import AdaptiveModel, RangeDecoder, RangeEncoder
from .errors import BitstreamError, ChecksumError

MAGIC = b"LCP1"
HEADER = struct.Struct(">4sBBBxIIII")
PREDICTOR_MED = 0
_MAX_SAMPLES = 1 << 26

_POW2 = np.array([1 << k for k in range(17)], dtype=np.uint32)


@dataclass(frozen=True)
class Plane:
    """Integer sample plane, channel-planar, samples shaped (channels, H, W)."""

    width: int
    height: int
    bit_depth: int
    channels: int
    samples: np.ndarray

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise ValueError(f"bit_depth {self.bit_depth} not supported")
        if self.channels not in (1, 3):
            raise ValueError(f"channels {self.channels} not supported")
        if self.width < 1 or self.height < 1:
            raise ValueError("empty plane")
        want = np.uint8 if self.bit_depth == 8 else np.uint16
        if self.samples.dtype != want:
            raise ValueError(f"samples dtype {self.samples.dtype}, expected {want}")
        if self.samples.shape != (self.channels, self.height, self.width):
            raise ValueError(f"samples shape {self.samples.shape} does not match "
                             f"({self.channels},{self.height},{self.width})")
        self.samples.setflags(write=False)

    @classmethod
    def from_array(cls, samples: np.ndarray, bit_depth: int) -> "Plane":
        samples = np.ascontiguousarray(samples)
        if samples.ndim == 2:
            samples = samples[None]
        c, h, w = samples.shape
        return cls(width=w, height=h, bit_depth=bit_depth, channels=c, samples=samples)

    def canonical_bytes(self) -> bytes:
        if self.bit_depth == 8:
            return self.samples.tobytes()
        return self.samples.astype(">u2").tobytes()

    @property
    def raw_bits(self) -> int:
        return self.channels * self.height * self.width * self.bit_depth


@dataclass(frozen=True)
class CodedPlane:
    width: int
    height: int
    bit_depth: int
    channels: int
    predictor_id: int
    checksum: int
    payload: bytes

    @property
    def payload_bits(self) -> int:
        return 8 * len(self.payload)

    def to_bytes(self) -> bytes:
        return HEADER.pack(MAGIC, self.bit_depth, self.channels, self.predictor_id,
                           self.width, self.height, self.checksum,
                           len(self.payload)) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "CodedPlane":
        if len(data) < HEADER.size:
            raise BitstreamError(f"coded plane truncated at {len(data)} bytes")
        magic, depth, channels, predictor, w, h, checksum, plen = \
            HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BitstreamError(f"bad plane magic {magic!r}")
        if predictor != PREDICTOR_MED:
            raise BitstreamError(f"unknown predictor id {predictor}")
        if depth not in (8, 16) or channels not in (1, 3):
            raise BitstreamError(f"bad depth/channels {depth}/{channels}")
        if w < 1 or h < 1 or channels * w * h > _MAX_SAMPLES:
            raise BitstreamError(f"implausible dimensions {w}x{h}x{channels}")
        if len(data) < HEADER.size + plen:
            raise BitstreamError("payload truncated")
        return cls(width=w, height=h, bit_depth=depth, channels=channels,
                   predictor_id=predictor, checksum=checksum,
                   payload=data[HEADER.size:HEADER.size + plen])


def _med_residuals(x: np.ndarray) -> np.ndarray:
    """Folded MED prediction residuals of one (H, W) channel, vectorized."""
    a = np.zeros_like(x)  # left
    a[:, 1:] = x[:, :-1]
    b = np.zeros_like(x)  # above
    b[1:, :] = x[:-1, :]
    c = np.zeros_like(x)  # above-left
    c[1:, 1:] = x[:-1, :-1]
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    pred = np.where(c >= hi, lo, np.where(c <= lo, hi, a + b - c))
    return x - pred


def _fold(diff: np.ndarray, bit_depth: int) -> np.ndarray:
    full = 1 << bit_depth
    half = full >> 1
    d = np.mod(diff, full)
    return np.where(d < half, 2 * d, 2 * (full - d) - 1).astype(np.uint32)


def _unfold(s: np.ndarray, bit_depth: int) -> np.ndarray:
    full = 1 << bit_depth
    even = (s & 1) == 0
    return np.where(even, s >> 1, full - ((s + 1) >> 1)).astype(np.int64)


def compress_plane(plane: Plane) -> CodedPlane:
    """Losslessly code a plane; any plane is codable."""
    enc = RangeEncoder()
    depth = plane.bit_depth
    for ch in range(plane.channels):
        x = plane.samples[ch].astype(np.int64)
        folded = _fold(_med_residuals(x), depth)
        classes = np.searchsorted(_POW2[:depth + 1], folded, side="right")
        model = AdaptiveModel(depth + 1)
        encode_sym = model.encode
        encode_raw = enc.encode_raw
        for k, s in zip(classes.ravel().tolist(), folded.ravel().tolist()):
            encode_sym(enc, k)
            if k > 1:
                encode_raw(s - (1 << (k - 1)), k - 1)
    checksum = zlib.crc32(plane.canonical_bytes())
    return CodedPlane(width=plane.width, height=plane.height, bit_depth=depth,
                      channels=plane.channels, predictor_id=PREDICTOR_MED,
                      checksum=checksum, payload=enc.finish())


def decompress_plane(coded: CodedPlane) -> Plane:
    """Invert compress_plane bit-exactly; raises on any corruption."""
    depth = coded.bit_depth
    w, h = coded.width, coded.height
    dec = RangeDecoder(coded.payload)
    full = 1 << depth
    mask = full - 1
    out = np.empty((coded.channels, h, w),
                   dtype=np.uint8 if depth == 8 else np.uint16)
    for ch in range(coded.channels):
        model = AdaptiveModel(depth + 1)
        decode_sym = model.decode
        decode_raw = dec.decode_raw
        folded = [0] * (h * w)
        for i in range(h * w):
            k = decode_sym(dec)
            if k == 1:
                folded[i] = 1
            elif k > 1:
                folded[i] = (1 << (k - 1)) | decode_raw(k - 1)
        diffs = _unfold(np.asarray(folded, dtype=np.uint32), depth).tolist()
        # MED needs reconstructed neighbors, so pixels come back sequentially.
        x = [0] * (h * w)
        for i in range(h):
            base = i * w
            above = x[base - w:base] if i else [0] * w
            left = 0
            aboveleft = 0
            for j in range(w):
                b = above[j]
                if left >= b:
                    hi_, lo_ = left, b
                else:
                    hi_, lo_ = b, left
                if aboveleft >= hi_:
                    pred = lo_
                elif aboveleft <= lo_:
                    pred = hi_
                else:
                    pred = left + b - aboveleft
                left = (pred + diffs[base + j]) & mask
                x[base + j] = left
                aboveleft = b
        out[ch] = np.asarray(x, dtype=np.int64).reshape(h, w).astype(out.dtype)
    plane = Plane(width=w, height=h, bit_depth=depth,
                  channels=coded.channels, samples=out)
    if zlib.crc32(plane.canonical_bytes()) != coded.checksum:
        raise ChecksumError("decoded samples fail the stored checksum")
    return plane


def compress_to_bytes(plane: Plane) -> bytes:
    return compress_plane(plane).to_bytes()


def decompress_from_bytes(data: bytes) -> Plane:
    return decompress_plane(CodedPlane.from_bytes(data))
