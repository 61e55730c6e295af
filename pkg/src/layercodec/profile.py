"""16-bit gray-scale instance profile.

Each nonzero pixel of the profile packs (category, instance index) into one
16-bit value: v = 256*(c-1) + n. Zero is background. The packing is a
bijection between [1, 65535] minus the multiples of 256 and the pairs
c in [1, 256], n in [1, 255], so categories and indices survive any
lossless trip through the profile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorruptProfileError, ProfileError
from .imagery import InstanceMap, _frozen, mask_bbox

PROFILE_SCALE = 65535.0


@dataclass(frozen=True)
class GrayProfile:
    """Single 16-bit plane, one value per pixel, 0 = background."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise ValueError(f"values shape {self.values.shape} does not match "
                             f"{self.height}x{self.width}")
        if self.values.dtype != np.uint16:
            raise ValueError("values must be uint16")
        _frozen(self.values)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "GrayProfile":
        values = np.ascontiguousarray(values, dtype=np.uint16)
        h, w = values.shape
        return cls(width=w, height=h, values=values)


@dataclass(frozen=True)
class TaskInstance:
    """One decoded object: enough for classification, detection, segmentation."""

    category_id: int
    instance_index: int
    bbox: tuple[int, int, int, int]
    mask: np.ndarray


def pack_value(category_id: int, instance_index: int) -> int:
    """Pack (category, instance) into a 16-bit gray value: 256*(c-1) + n."""
    if not 1 <= category_id <= 256:
        raise ProfileError(f"category_id {category_id} outside [1,256]")
    if not 1 <= instance_index <= 255:
        raise ProfileError(f"instance_index {instance_index} outside [1,255]")
    return 256 * (category_id - 1) + instance_index


def unpack_value(value: int) -> tuple[int, int]:
    """Invert pack_value: c = floor(v/256) + 1, n = v - 256*(c-1)."""
    if value == 0:
        raise ProfileError("0 is background, not an instance")
    if not 0 < value <= 65535:
        raise ProfileError(f"value {value} outside 16-bit range")
    if value % 256 == 0:
        # 256*(c-1) + n with n in [1,255] is never divisible by 256.
        raise ProfileError(f"value {value} is not representable (multiple of 256)")
    category_id = value // 256 + 1
    instance_index = value - 256 * (category_id - 1)
    return category_id, instance_index


def encode_profile(imap: InstanceMap) -> GrayProfile:
    """Paint instances into a 16-bit plane in paint order (later on top)."""
    values = np.zeros((imap.height, imap.width), dtype=np.uint16)
    for idx in imap.paint_order:
        rec = imap.instances[idx]
        values[rec.mask] = pack_value(rec.category_id, rec.instance_index)
    return GrayProfile(width=imap.width, height=imap.height, values=values)


def decode_tasks(profile: GrayProfile) -> list[TaskInstance]:
    """Recover all instances visible in the profile, sorted by packed value.

    Mask is the exact pixel set of each value, bbox its tight bounds.
    """
    out: list[TaskInstance] = []
    for value in np.unique(profile.values):
        v = int(value)
        if v == 0:
            continue
        if v % 256 == 0:
            raise CorruptProfileError(f"profile value {v} decodes to no instance")
        category_id, instance_index = unpack_value(v)
        mask = profile.values == value
        out.append(TaskInstance(category_id=category_id,
                                instance_index=instance_index,
                                bbox=mask_bbox(mask),
                                mask=mask))
    return out


def profile_to_channel(profile: GrayProfile) -> np.ndarray:
    """Scale the profile to one float32 channel in [0, 1] for network input."""
    return (profile.values / PROFILE_SCALE).astype(np.float32)


def mask_to_rle(mask: np.ndarray) -> dict:
    """Row-major run lengths, first run counting zeros (may be 0)."""
    flat = np.asarray(mask, dtype=np.uint8).ravel()
    edges = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0] == 1:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def rle_to_mask(rle: dict) -> np.ndarray:
    h, w = rle["size"]
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for count in rle["counts"]:
        if value:
            flat[pos:pos + count] = True
        pos += count
        value = not value
    if pos != h * w:
        raise ValueError(f"RLE covers {pos} pixels, mask has {h * w}")
    return flat.reshape(h, w)


def tasks_to_json(instances: list[TaskInstance], dictionary) -> list[dict]:
    """The task output schema: {category_id, name, bbox, mask_rle} per object."""
    out = []
    for t in instances:
        name = dictionary.entries.get(t.category_id, f"category_{t.category_id}") \
            if dictionary is not None else f"category_{t.category_id}"
        out.append({
            "category_id": t.category_id,
            "name": name,
            "bbox": list(t.bbox),
            "mask_rle": mask_to_rle(t.mask),
        })
    return out
