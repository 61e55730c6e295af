"""Lossy residual coder for the third stream.

Per channel: 8x8 orthonormal DCT-II blocks, uniform quantization with step
2^((qp-4)/6), zigzag scan, then per-block end-of-block position + magnitude
classes through the shared adaptive range coder. The encoder runs the
inverse path to stamp a CRC of the reconstruction, so transport corruption
is always detected.

Stream layout (big-endian):

    0      1    qp
    1      1    channels
    2      4*c  payload length per channel
    ...    -    payloads, channel order
    end    4    CRC-32 of the reconstructed residual (canonical '>i2' bytes)
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .entropy import AdaptiveModel, RangeDecoder, RangeEncoder
from .errors import BitstreamError, ChecksumError

BLOCK = 8
_CLASS_ALPHABET = 20  # folded levels stay under 2^19 for any qp in [0, 51]


@dataclass(frozen=True)
class QpSetting:
    """Quantization parameter; step doubles every 6 qp."""

    qp: int

    def __post_init__(self):
        if not 0 <= self.qp <= 51:
            raise ValueError(f"qp {self.qp} outside [0, 51]")

    @property
    def qstep(self) -> float:
        return 2.0 ** ((self.qp - 4) / 6.0)


def _dct_matrix() -> np.ndarray:
    n = np.arange(BLOCK)
    basis = np.cos(np.pi * (2 * n[None, :] + 1) * n[:, None] / (2 * BLOCK))
    m = basis * np.sqrt(2.0 / BLOCK)
    m[0] *= 1.0 / np.sqrt(2.0)
    return m


_DCT = _dct_matrix()


def _zigzag_order() -> np.ndarray:
    cells = [(i, j) for i in range(BLOCK) for j in range(BLOCK)]
    cells.sort(key=lambda ij: (ij[0] + ij[1],
                               ij[0] if (ij[0] + ij[1]) % 2 else ij[1]))
    return np.array([i * BLOCK + j for i, j in cells], dtype=np.int64)


_ZIGZAG = _zigzag_order()
_UNZIGZAG = np.argsort(_ZIGZAG)


def _to_blocks(chan: np.ndarray) -> np.ndarray:
    h, w = chan.shape
    return (chan.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK)
            .transpose(0, 2, 1, 3).reshape(-1, BLOCK, BLOCK))


def _from_blocks(blocks: np.ndarray, h: int, w: int) -> np.ndarray:
    return (blocks.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK)
            .transpose(0, 2, 1, 3).reshape(h, w))


def dct_blocks(blocks: np.ndarray) -> np.ndarray:
    return np.einsum("ij,bjk,lk->bil", _DCT, blocks, _DCT, optimize=True)


def idct_blocks(coefs: np.ndarray) -> np.ndarray:
    return np.einsum("ji,bjk,kl->bil", _DCT, coefs, _DCT, optimize=True)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _quantize_channel(chan: np.ndarray, qstep: float) -> np.ndarray:
    coefs = dct_blocks(_to_blocks(chan.astype(np.float64)))
    return _round_half_away(coefs / qstep).astype(np.int64)


def _reconstruct_channel(levels: np.ndarray, qstep: float,
                         h: int, w: int) -> np.ndarray:
    pixels = idct_blocks(levels.astype(np.float64) * qstep)
    pixels = _round_half_away(pixels)
    return np.clip(_from_blocks(pixels, h, w), -255, 255).astype(np.int16)


def _encode_channel(levels: np.ndarray) -> bytes:
    """levels (nblocks, 8, 8) -> EOB + class/extra coding of the zigzag scan."""
    enc = RangeEncoder()
    eob_model = AdaptiveModel(BLOCK * BLOCK + 1)
    class_model = AdaptiveModel(_CLASS_ALPHABET)
    scan = levels.reshape(-1, BLOCK * BLOCK)[:, _ZIGZAG]
    folded = np.where(scan >= 0, 2 * scan, -2 * scan - 1).astype(np.int64)
    nonzero = folded != 0
    eobs = np.where(nonzero.any(axis=1),
                    BLOCK * BLOCK - np.argmax(nonzero[:, ::-1], axis=1), 0)
    for bi in range(folded.shape[0]):
        eob = int(eobs[bi])
        eob_model.encode(enc, eob)
        row = folded[bi]
        for s in row[:eob].tolist():
            k = s.bit_length()
            if k >= _CLASS_ALPHABET:
                raise BitstreamError(f"residual level {s} out of coding range")
            class_model.encode(enc, k)
            if k > 1:
                enc.encode_raw(s - (1 << (k - 1)), k - 1)
    return enc.finish()


def _decode_channel(payload: bytes, nblocks: int) -> np.ndarray:
    dec = RangeDecoder(payload)
    eob_model = AdaptiveModel(BLOCK * BLOCK + 1)
    class_model = AdaptiveModel(_CLASS_ALPHABET)
    folded = np.zeros((nblocks, BLOCK * BLOCK), dtype=np.int64)
    for bi in range(nblocks):
        eob = eob_model.decode(dec)
        row = folded[bi]
        for i in range(eob):
            k = class_model.decode(dec)
            if k == 1:
                row[i] = 1
            elif k > 1:
                row[i] = (1 << (k - 1)) | dec.decode_raw(k - 1)
    scan = np.zeros_like(folded)
    scan[:, _ZIGZAG] = folded
    levels = np.where(scan % 2 == 0, scan // 2, -(scan + 1) // 2)
    return levels.reshape(nblocks, BLOCK, BLOCK)


def _residual_crc(residual: np.ndarray) -> int:
    return zlib.crc32(residual.astype(">i2").tobytes())


def encode_residual(residual: np.ndarray, qp: QpSetting) -> bytes:
    """residual (3, H, W) int16 in [-255, 255], dims multiples of 8."""
    c, h, w = residual.shape
    if h % BLOCK or w % BLOCK:
        raise ValueError(f"residual dims {h}x{w} not multiples of {BLOCK}")
    payloads = []
    recon = np.empty_like(residual)
    for ch in range(c):
        levels = _quantize_channel(residual[ch], qp.qstep)
        payloads.append(_encode_channel(levels))
        recon[ch] = _reconstruct_channel(levels, qp.qstep, h, w)
    head = struct.pack(">BB", qp.qp, c)
    head += b"".join(struct.pack(">I", len(p)) for p in payloads)
    return head + b"".join(payloads) + struct.pack(">I", _residual_crc(recon))


def decode_residual(data: bytes, height: int, width: int) -> tuple[np.ndarray, QpSetting]:
    """Returns (reconstructed residual (c, H, W) int16, qp)."""
    if len(data) < 2:
        raise BitstreamError("residual stream truncated")
    qp_value, c = struct.unpack_from(">BB", data)
    if c not in (1, 3):
        raise BitstreamError(f"bad residual channel count {c}")
    qp = QpSetting(qp_value)
    pos = 2
    if len(data) < pos + 4 * c:
        raise BitstreamError("residual stream truncated in lengths")
    lengths = struct.unpack_from(f">{c}I", data, pos)
    pos += 4 * c
    if len(data) < pos + sum(lengths) + 4:
        raise BitstreamError("residual stream truncated in payloads")
    if height % BLOCK or width % BLOCK:
        raise BitstreamError(f"residual dims {height}x{width} not multiples of {BLOCK}")
    nblocks = (height // BLOCK) * (width // BLOCK)
    recon = np.empty((c, height, width), dtype=np.int16)
    for ch in range(c):
        payload = data[pos:pos + lengths[ch]]
        pos += lengths[ch]
        levels = _decode_channel(payload, nblocks)
        recon[ch] = _reconstruct_channel(levels, qp.qstep, height, width)
    (stored_crc,) = struct.unpack_from(">I", data, pos)
    if _residual_crc(recon) != stored_crc:
        raise ChecksumError("decoded residual fails the stored checksum")
    return recon, qp


def reconstruct_high(general_display: np.ndarray, residual: np.ndarray) -> np.ndarray:
    """x^ = clip(x~ + r~, 0, 255); both (3, H, W) or (H, W, 3) alike."""
    if general_display.shape != residual.shape:
        raise ValueError(f"shape mismatch {general_display.shape} vs {residual.shape}")
    total = general_display.astype(np.int32) + residual.astype(np.int32)
    return np.clip(total, 0, 255).astype(np.uint8)
