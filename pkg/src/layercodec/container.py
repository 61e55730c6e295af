"""Layered bitstream container and the end-to-end encode/decode pipelines.

Collects up to three independently decodable streams: the lossless 16-bit
instance profile, the lossless quantized feature planes, and the lossy
residual. Decoding stops as early as the requested level allows — machine
tasks read only the first stream's bytes.

Header layout (big-endian, 44 bytes):

    0   4  magic "LMC1"
    4   1  version
    5   1  stream presence flags: bit0 profile, bit1 features, bit2 residual
    6   1  qp (255 when there is no residual stream)
    7   1  reserved, 0
    8   4  original width          12  4  original height
    16  4  padded width            20  4  padded height
    24  4  model checksum (CRC-32 of the network weights)
    28  4  stream1 length          32  4  stream2 length
    36  4  stream3 length
    40  4  CRC-32 of header bytes 0..39
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

from . import lossless, residual as residual_mod
from .errors import (BitstreamError, ChecksumError, MissingStreamError,
                     ModelMismatchError)
from .imagery import InstanceMap, RgbImage, crop_to_original, pad_to_multiple
from .networks import (DOWNSAMPLE, CodecModel, dequantize_features,
                       image_to_tensor, quantize_features, tensor_to_display)
from .profile import GrayProfile, TaskInstance, decode_tasks, encode_profile, \
    profile_to_channel
from .residual import QpSetting

MAGIC = b"LMC1"
VERSION = 1
HEADER = struct.Struct(">4sBBBxIIIIIIIII")
HEADER_SIZE = HEADER.size  # 44

FLAG_PROFILE = 1
FLAG_FEATURES = 2
FLAG_RESIDUAL = 4

LEVELS = ("tasks", "general", "high")


@dataclass(frozen=True)
class ContainerHeader:
    flags: int
    qp: int
    original_size: tuple[int, int]  # (width, height)
    padded_size: tuple[int, int]
    model_checksum: int
    stream_lengths: tuple[int, int, int]

    def has(self, flag: int) -> bool:
        return bool(self.flags & flag)

    def stream_offset(self, index: int) -> int:
        return HEADER_SIZE + sum(self.stream_lengths[:index])

    def pack(self) -> bytes:
        body = HEADER.pack(MAGIC, VERSION, self.flags, self.qp,
                           self.original_size[0], self.original_size[1],
                           self.padded_size[0], self.padded_size[1],
                           self.model_checksum, *self.stream_lengths, 0)
        return body[:-4] + struct.pack(">I", zlib.crc32(body[:-4]))

    @classmethod
    def unpack(cls, raw: bytes) -> "ContainerHeader":
        if len(raw) < HEADER_SIZE:
            raise BitstreamError(f"container truncated at {len(raw)} bytes")
        magic, version, flags, qp, ow, oh, pw, ph, model_crc, l1, l2, l3, hcrc = \
            HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise BitstreamError(f"bad container magic {magic!r}")
        if version != VERSION:
            raise BitstreamError(f"unsupported container version {version}")
        if zlib.crc32(raw[:HEADER_SIZE - 4]) != hcrc:
            raise ChecksumError("container header fails its checksum")
        return cls(flags=flags, qp=qp, original_size=(ow, oh),
                   padded_size=(pw, ph), model_checksum=model_crc,
                   stream_lengths=(l1, l2, l3))


class BytesReader:
    """Random-access byte source for containers."""

    def __init__(self, data: bytes):
        self.data = data

    def __len__(self):
        return len(self.data)

    def read_at(self, offset: int, size: int) -> bytes:
        chunk = self.data[offset:offset + size]
        if len(chunk) < size:
            raise BitstreamError(f"container truncated: wanted {size} bytes "
                                 f"at offset {offset}")
        return chunk


class TrackingReader(BytesReader):
    """BytesReader that records every (offset, size) span it serves."""

    def __init__(self, data: bytes):
        super().__init__(data)
        self.spans: list[tuple[int, int]] = []

    def read_at(self, offset: int, size: int) -> bytes:
        self.spans.append((offset, size))
        return super().read_at(offset, size)

    def bytes_touched_beyond(self, limit: int) -> int:
        return sum(max(0, off + size - max(off, limit))
                   for off, size in self.spans)


def mux(header: ContainerHeader, streams: tuple[bytes, bytes, bytes]) -> bytes:
    lengths = tuple(len(s) for s in streams)
    if lengths != header.stream_lengths:
        header = replace(header, stream_lengths=lengths)
    return header.pack() + b"".join(streams)


def demux(data: bytes) -> tuple[ContainerHeader, tuple[bytes, bytes, bytes]]:
    header = ContainerHeader.unpack(data)
    reader = BytesReader(data)
    streams = tuple(
        reader.read_at(header.stream_offset(i), header.stream_lengths[i])
        for i in range(3))
    return header, streams


@dataclass
class EncodeResult:
    data: bytes
    header: ContainerHeader


@dataclass
class DecodeResult:
    level: str
    header: ContainerHeader
    tasks: list[TaskInstance] | None = None
    profile: GrayProfile | None = None
    general: RgbImage | None = None
    high: RgbImage | None = None


@dataclass
class _Prepared:
    """Everything the qp-independent half of encode() produces."""

    header: ContainerHeader
    stream1: bytes
    stream2: bytes
    residual: np.ndarray       # (3, ph, pw) int16
    general_display: np.ndarray  # (3, ph, pw) int16


def _profile_channel_padded(profile: GrayProfile, padded_size) -> np.ndarray:
    """Profile scaled to [0,1] and zero-padded (background) to network dims."""
    pw, ph = padded_size
    chan = np.zeros((ph, pw), dtype=np.float32)
    chan[:profile.height, :profile.width] = profile_to_channel(profile)
    return chan[None, None]


def prepare_encode(image: RgbImage, imap: InstanceMap | None,
                   model: CodecModel) -> _Prepared:
    if model.include_profile:
        if imap is None:
            raise ValueError("model wants an instance map")
        if (imap.width, imap.height) != (image.width, image.height):
            raise ValueError("instance map does not match the image size")
        profile = encode_profile(imap)
        stream1 = lossless.compress_to_bytes(
            lossless.Plane.from_array(profile.values, bit_depth=16))
    else:
        profile = None
        stream1 = b""
    padded, original_size = pad_to_multiple(image, DOWNSAMPLE)
    padded_size = (padded.width, padded.height)
    x = image_to_tensor(padded.samples)[None]
    chan = (_profile_channel_padded(profile, padded_size)
            if profile is not None else None)
    y = model.le.forward(x, chan)
    quantized = quantize_features(y[0])
    stream2 = lossless.compress_to_bytes(
        lossless.Plane.from_array(quantized, bit_depth=8))
    xt = model.ip.forward(dequantize_features(quantized)[None], chan)
    general_display = tensor_to_display(xt[0])
    source = padded.samples.transpose(2, 0, 1).astype(np.int16)
    res = (source - general_display).astype(np.int16)
    header = ContainerHeader(
        flags=(FLAG_PROFILE if stream1 else 0) | FLAG_FEATURES,
        qp=255, original_size=original_size, padded_size=padded_size,
        model_checksum=model.checksum, stream_lengths=(len(stream1), len(stream2), 0))
    return _Prepared(header=header, stream1=stream1, stream2=stream2,
                     residual=res, general_display=general_display)


def finish_encode(prepared: _Prepared, qp: QpSetting | None) -> EncodeResult:
    if qp is None:
        header = prepared.header
        stream3 = b""
    else:
        stream3 = residual_mod.encode_residual(prepared.residual, qp)
        header = replace(prepared.header, flags=prepared.header.flags | FLAG_RESIDUAL,
                         qp=qp.qp)
    header = replace(header, stream_lengths=(len(prepared.stream1),
                                             len(prepared.stream2), len(stream3)))
    return EncodeResult(data=mux(header, (prepared.stream1, prepared.stream2,
                                          stream3)),
                        header=header)


def encode(image: RgbImage, imap: InstanceMap | None, model: CodecModel,
           qp: QpSetting | None) -> EncodeResult:
    """Run the full pipeline: profile, features, prediction, residual, mux."""
    return finish_encode(prepare_encode(image, imap, model), qp)


def _as_reader(source) -> BytesReader:
    if isinstance(source, BytesReader):
        return source
    if isinstance(source, (bytes, bytearray)):
        return BytesReader(bytes(source))
    raise TypeError(f"cannot read a container from {type(source)!r}")


def read_header(source) -> ContainerHeader:
    reader = _as_reader(source)
    return ContainerHeader.unpack(reader.read_at(0, HEADER_SIZE))


def decode(source, level: str, model: CodecModel | None = None) -> DecodeResult:
    """Decode up to the requested level, touching only the streams it needs."""
    if level not in LEVELS:
        raise ValueError(f"unknown decode level {level!r}")
    reader = _as_reader(source)
    header = ContainerHeader.unpack(reader.read_at(0, HEADER_SIZE))
    result = DecodeResult(level=level, header=header)

    profile = None
    if header.has(FLAG_PROFILE):
        if level == "tasks" or model is None or model.include_profile:
            stream1 = reader.read_at(header.stream_offset(0),
                                     header.stream_lengths[0])
            plane = lossless.decompress_from_bytes(stream1)
            profile = GrayProfile.from_array(plane.samples[0])
            result.profile = profile
            result.tasks = decode_tasks(profile)
    elif level == "tasks":
        raise MissingStreamError("container has no profile stream; "
                                 "machine tasks are not decodable")
    if level == "tasks":
        return result

    if model is None:
        raise ValueError(f"decode level {level!r} needs the network weights")
    if model.checksum != header.model_checksum:
        raise ModelMismatchError(
            f"container was encoded with weights {header.model_checksum:#010x}, "
            f"loaded weights are {model.checksum:#010x}")
    if model.include_profile and profile is None:
        raise MissingStreamError("model wants the profile stream but the "
                                 "container does not carry it")
    if not header.has(FLAG_FEATURES):
        raise MissingStreamError("container has no feature stream")
    stream2 = reader.read_at(header.stream_offset(1), header.stream_lengths[1])
    plane = lossless.decompress_from_bytes(stream2)
    chan = (_profile_channel_padded(profile, header.padded_size)
            if model.include_profile else None)
    xt = model.ip.forward(dequantize_features(plane.samples)[None], chan)
    general_display = tensor_to_display(xt[0])
    result.general = _display_to_image(general_display, header.original_size)
    if level == "general":
        return result

    if not header.has(FLAG_RESIDUAL):
        raise MissingStreamError("container has no residual stream; "
                                 "high-quality decode is not possible")
    stream3 = reader.read_at(header.stream_offset(2), header.stream_lengths[2])
    pw, ph = header.padded_size
    res, _ = residual_mod.decode_residual(stream3, ph, pw)
    high = residual_mod.reconstruct_high(general_display, res)
    result.high = _display_to_image(high, header.original_size)
    return result


def _display_to_image(display: np.ndarray, original_size) -> RgbImage:
    samples = np.clip(display, 0, 255).astype(np.uint8).transpose(1, 2, 0)
    return RgbImage.from_array(crop_to_original(samples, original_size))


@dataclass(frozen=True)
class StreamStats:
    pixels: int
    bits: tuple[int, int, int]

    @property
    def total_bits(self) -> int:
        return sum(self.bits)

    def bpp(self, index: int) -> float:
        return self.bits[index] / self.pixels

    @property
    def total_bpp(self) -> float:
        return self.total_bits / self.pixels


def stream_stats(source) -> StreamStats:
    header = read_header(source)
    w, h = header.original_size
    return StreamStats(pixels=w * h,
                       bits=tuple(8 * n for n in header.stream_lengths))


def truncate_container(data: bytes, keep_streams: int) -> bytes:
    """Drop trailing streams (keep_streams in 1..3), fixing flags and lengths."""
    if not 1 <= keep_streams <= 3:
        raise ValueError("keep_streams must be 1, 2, or 3")
    header, streams = demux(data)
    kept = tuple(s if i < keep_streams else b"" for i, s in enumerate(streams))
    flags = header.flags
    for i in range(keep_streams, 3):
        flags &= ~(FLAG_PROFILE, FLAG_FEATURES, FLAG_RESIDUAL)[i]
    header = replace(header, flags=flags,
                     qp=header.qp if flags & FLAG_RESIDUAL else 255,
                     stream_lengths=tuple(len(s) for s in kept))
    return mux(header, kept)
