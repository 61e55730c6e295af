"""Raster images, instance annotations, and the pixel-domain bookkeeping shared by the codec.

Images travel as binary PPM (P6, 8-bit RGB); 16-bit gray planes as binary
PGM (P5, maxval 65535, big-endian). Annotations are a minimal JSON-lines
polygon format, one object per line:

    {"category_id": 24, "polygon": [[x0, y0], [x1, y1], ...]}

with pixel coordinates, origin at the top-left corner.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import AnnotationError, ImageFormatError

MAX_CATEGORY = 256
MAX_INSTANCES_PER_CATEGORY = 255


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB raster, samples shaped (height, width, 3)."""

    width: int
    height: int
    samples: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad image dims {self.width}x{self.height}")
        if self.samples.shape != (self.height, self.width, 3):
            raise ValueError(f"samples shape {self.samples.shape} does not match "
                             f"{self.height}x{self.width}x3")
        if self.samples.dtype != np.uint8:
            raise ValueError("samples must be uint8")
        _frozen(self.samples)

    @classmethod
    def from_array(cls, samples: np.ndarray) -> "RgbImage":
        samples = np.ascontiguousarray(samples, dtype=np.uint8)
        h, w = samples.shape[:2]
        return cls(width=w, height=h, samples=samples)


@dataclass(frozen=True)
class InstanceRecord:
    """One annotated object: category, per-category index, mask and tight bbox.

    bbox is (x_min, y_min, x_max, y_max) with inclusive max coordinates.
    """

    category_id: int
    instance_index: int
    mask: np.ndarray
    bbox: tuple[int, int, int, int]

    def __post_init__(self):
        if not 1 <= self.category_id <= MAX_CATEGORY:
            raise ValueError(f"category_id {self.category_id} outside [1,{MAX_CATEGORY}]")
        if not 1 <= self.instance_index <= MAX_INSTANCES_PER_CATEGORY:
            raise ValueError(f"instance_index {self.instance_index} outside "
                             f"[1,{MAX_INSTANCES_PER_CATEGORY}]")
        if self.mask.dtype != bool:
            raise ValueError("mask must be boolean")
        if not self.mask.any():
            raise ValueError("mask is empty")
        _frozen(self.mask)

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class InstanceMap:
    """All instances of one image plus the order in which they are painted.

    paint_order indexes into `instances`; later entries are painted on top,
    so the list runs from largest to smallest mask area.
    """

    width: int
    height: int
    instances: tuple[InstanceRecord, ...]
    paint_order: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for rec in self.instances:
            if rec.mask.shape != (self.height, self.width):
                raise ValueError("instance mask does not fit the map dimensions")
        order = self.paint_order or default_paint_order(self.instances)
        if sorted(order) != list(range(len(self.instances))):
            raise ValueError("paint_order is not a permutation of the instances")
        object.__setattr__(self, "paint_order", tuple(order))
        seen = set()
        for rec in self.instances:
            key = (rec.category_id, rec.instance_index)
            if key in seen:
                raise ValueError(f"duplicate (category, instance) pair {key}")
            seen.add(key)


def default_paint_order(instances) -> tuple[int, ...]:
    """Descending mask area; ties keep file order. Small objects end up on top."""
    return tuple(sorted(range(len(instances)), key=lambda i: (-instances[i].area, i)))


@dataclass(frozen=True)
class CategoryDictionary:
    """Fixed id -> name table shared by encoder and decoder, never transmitted."""

    entries: dict[int, str]

    def __post_init__(self):
        if len(self.entries) > MAX_CATEGORY:
            raise ValueError(f"more than {MAX_CATEGORY} categories")
        for cid in self.entries:
            if not 1 <= cid <= MAX_CATEGORY:
                raise ValueError(f"category id {cid} outside [1,{MAX_CATEGORY}]")

    def name(self, category_id: int) -> str:
        return self.entries[category_id]

    def __contains__(self, category_id: int) -> bool:
        return category_id in self.entries

    @classmethod
    def parse(cls, text: str, where: str = "<dictionary>") -> "CategoryDictionary":
        """Parse tab-separated "id<TAB>name" lines."""
        entries: dict[int, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise AnnotationError(f"{where}:{lineno}: expected 'id<TAB>name'")
            try:
                cid = int(parts[0])
            except ValueError:
                raise AnnotationError(f"{where}:{lineno}: bad category id {parts[0]!r}")
            if cid in entries:
                raise AnnotationError(f"{where}:{lineno}: duplicate category id {cid}")
            entries[cid] = parts[1]
        return cls(entries=entries)

    @classmethod
    def load(cls, path) -> "CategoryDictionary":
        """Read a tab-separated "id<TAB>name" file, one category per line."""
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read(), where=os.fspath(path))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for cid in sorted(self.entries):
                fh.write(f"{cid}\t{self.entries[cid]}\n")


# ---------------------------------------------------------------------------
# PPM / PGM io


def _read_pnm_header(data: bytes, magic: bytes):
    """Parse a PNM header, returning (fields, payload_offset).

    Tokens are separated by whitespace; '#' starts a comment running to end
    of line. Exactly one whitespace byte follows the maxval token.
    """
    if not data.startswith(magic):
        raise ImageFormatError(f"not a {magic.decode()} file")
    fields = []
    pos = len(magic)
    while len(fields) < 3:
        if pos >= len(data):
            raise ImageFormatError("truncated header")
        c = data[pos:pos + 1]
        if c == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise ImageFormatError("unterminated comment")
            pos = nl + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace() and data[end:end + 1] != b"#":
                end += 1
            token = data[pos:end]
            if not token.isdigit():
                raise ImageFormatError(f"bad header token {token!r}")
            fields.append(int(token))
            pos = end
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("missing whitespace after maxval")
    return fields, pos + 1


def load_image(path) -> RgbImage:
    """Read a binary PPM (P6, maxval 255)."""
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_ppm(data)


def decode_ppm(data: bytes) -> RgbImage:
    (width, height, maxval), offset = _read_pnm_header(data, b"P6")
    if maxval != 255:
        raise ImageFormatError(f"maxval {maxval} unsupported, expected 255")
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad dimensions {width}x{height}")
    need = width * height * 3
    payload = data[offset:offset + need]
    if len(payload) < need:
        raise ImageFormatError(f"truncated payload: {len(payload)} of {need} bytes")
    samples = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return RgbImage(width=width, height=height, samples=samples.copy())


def encode_ppm(img: RgbImage) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.samples.tobytes()


def save_image(img: RgbImage, path) -> None:
    _atomic_write(path, encode_ppm(img))


def decode_pgm16(data: bytes) -> np.ndarray:
    """Read a binary PGM (P5, maxval 65535) into a (H, W) uint16 array."""
    (width, height, maxval), offset = _read_pnm_header(data, b"P5")
    if maxval != 65535:
        raise ImageFormatError(f"maxval {maxval} unsupported, expected 65535")
    need = width * height * 2
    payload = data[offset:offset + need]
    if len(payload) < need:
        raise ImageFormatError(f"truncated payload: {len(payload)} of {need} bytes")
    return np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.uint16)


def encode_pgm16(values: np.ndarray) -> bytes:
    if values.ndim != 2 or values.dtype != np.uint16:
        raise ValueError("expected a 2-d uint16 array")
    h, w = values.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    return header + values.astype(">u2").tobytes()


def load_pgm16(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pgm16(fh.read())


def save_pgm16(values: np.ndarray, path) -> None:
    _atomic_write(path, encode_pgm16(values))


def _atomic_write(path, data: bytes) -> None:
    """Write via a temp file + rename so failures never leave partial output."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Padding


def pad_to_multiple(img: RgbImage, m: int) -> tuple[RgbImage, tuple[int, int]]:
    """Grow the image to the next multiple of m per side by replicating edges.

    Returns the padded image and the original (width, height) so the decoder
    can crop back.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    pw = -img.width % m
    ph = -img.height % m
    if pw == 0 and ph == 0:
        return img, (img.width, img.height)
    padded = np.pad(img.samples, ((0, ph), (0, pw), (0, 0)), mode="edge")
    return RgbImage.from_array(padded), (img.width, img.height)


def crop_to_original(samples: np.ndarray, original_size: tuple[int, int]) -> np.ndarray:
    w, h = original_size
    return samples[:h, :w]


# ---------------------------------------------------------------------------
# Annotation ingestion


def round_half_up(values: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from floor ties (10.5 -> 11)."""
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5).astype(np.int64)


def rasterize_polygon(vertices: np.ndarray, width: int, height: int) -> np.ndarray:
    """Fill an integer-vertex polygon into a boolean (H, W) mask.

    A pixel belongs to the polygon when its center (x+0.5, y+0.5) is inside
    under the even-odd rule, tested with a horizontal ray. Vertices are
    integers, so a center never coincides with a vertex and the half-open
    edge test below is unambiguous.
    """
    verts = np.asarray(vertices, dtype=np.float64)
    if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
        raise AnnotationError("polygon needs at least 3 (x, y) vertices")
    xs = np.arange(width, dtype=np.float64) + 0.5
    ys = np.arange(height, dtype=np.float64) + 0.5
    px = np.broadcast_to(xs, (height, width))
    py = np.broadcast_to(ys[:, None], (height, width))
    inside = np.zeros((height, width), dtype=bool)
    n = verts.shape[0]
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        if y0 == y1:
            continue
        # Half-open span [min(y), max(y)) so shared endpoints count once.
        crosses = (py >= min(y0, y1)) & (py < max(y0, y1))
        x_at = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (x_at > px)
    return inside


def mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(mask)
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def parse_annotations(text: str, dictionary: CategoryDictionary,
                      width: int, height: int,
                      where: str = "<annotations>") -> InstanceMap:
    """Build an InstanceMap from JSON-lines polygon text.

    Fractional polygon coordinates are rounded to integers before
    rasterization; instance indices count 1, 2, ... per category in file
    order; paint order is descending mask area.
    """
    records: list[InstanceRecord] = []
    counts: dict[int, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AnnotationError(f"{where}:{lineno}: bad JSON: {exc}")
        records.append(_ingest_one(obj, dictionary, counts, width, height,
                                   where=f"{where}:{lineno}"))
    return InstanceMap(width=width, height=height, instances=tuple(records))


def ingest_annotations(path, dictionary: CategoryDictionary,
                       width: int, height: int) -> InstanceMap:
    """parse_annotations over a file on disk."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_annotations(fh.read(), dictionary, width, height,
                                 where=os.fspath(path))


def _ingest_one(obj: dict, dictionary: CategoryDictionary, counts: dict[int, int],
                width: int, height: int, where: str) -> InstanceRecord:
    try:
        cid = int(obj["category_id"])
        polygon = obj["polygon"]
    except (KeyError, TypeError, ValueError):
        raise AnnotationError(f"{where}: expected category_id and polygon fields")
    if cid not in dictionary:
        raise AnnotationError(f"{where}: unknown category_id {cid}")
    if not isinstance(polygon, list) or len(polygon) < 3:
        raise AnnotationError(f"{where}: degenerate polygon with "
                              f"{len(polygon) if isinstance(polygon, list) else '?'} vertices")
    verts = round_half_up(np.asarray(polygon, dtype=np.float64))
    mask = rasterize_polygon(verts, width, height)
    if not mask.any():
        raise AnnotationError(f"{where}: polygon rasterizes to an empty mask")
    counts[cid] = counts.get(cid, 0) + 1
    if counts[cid] > MAX_INSTANCES_PER_CATEGORY:
        raise AnnotationError(f"{where}: more than {MAX_INSTANCES_PER_CATEGORY} "
                              f"instances of category {cid}")
    return InstanceRecord(category_id=cid, instance_index=counts[cid],
                          mask=mask, bbox=mask_bbox(mask))
