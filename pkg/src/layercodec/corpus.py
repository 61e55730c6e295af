"""Synthetic desk-scale corpus: small images whose painted shapes line up
with their instance annotations, plus the fixed category dictionary.

Deterministic for a given seed, so CI and the acceptance suite can build
identical corpora on the fly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .imagery import (CategoryDictionary, InstanceMap, InstanceRecord, RgbImage,
                      ingest_annotations, load_image, mask_bbox,
                      rasterize_polygon, round_half_up, save_image)

DEFAULT_CATEGORIES = {
    1: "disk", 2: "box", 3: "wedge", 4: "ring",
    5: "stripe", 6: "blob", 7: "shard", 8: "patch",
}


def default_dictionary() -> CategoryDictionary:
    return CategoryDictionary(entries=dict(DEFAULT_CATEGORIES))


@dataclass(frozen=True)
class CorpusItem:
    name: str
    image: RgbImage
    imap: InstanceMap


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.zeros((size, size, 3))
    for c in range(3):
        fx, fy = rng.uniform(0.5, 3.0, size=2)
        px, py = rng.uniform(0, 2 * np.pi, size=2)
        amp = rng.uniform(30, 70)
        base = rng.uniform(60, 180)
        img[:, :, c] = base + amp * np.sin(2 * np.pi * fx * xx + px) \
            * np.cos(2 * np.pi * fy * yy + py)
    return img


def _random_polygon(rng: np.random.Generator, size: int) -> list[list[float]]:
    cx = rng.uniform(0.15 * size, 0.85 * size)
    cy = rng.uniform(0.15 * size, 0.85 * size)
    radius = rng.uniform(0.08 * size, 0.3 * size)
    nvert = int(rng.integers(3, 9))
    angles = np.sort(rng.uniform(0, 2 * np.pi, size=nvert))
    radii = radius * rng.uniform(0.6, 1.0, size=nvert)
    xs = cx + radii * np.cos(angles)
    ys = cy + radii * np.sin(angles)
    return [[float(x), float(y)] for x, y in zip(xs, ys)]


def make_item(rng: np.random.Generator, size: int, max_instances: int = 5,
              min_instances: int = 1,
              dictionary: CategoryDictionary | None = None):
    """Returns (image samples uint8, list of annotation objects)."""
    dictionary = dictionary or default_dictionary()
    img = _background(rng, size)
    cat_ids = sorted(dictionary.entries)
    n = int(rng.integers(min_instances, max_instances + 1))
    objects = []
    for _ in range(n):
        for _attempt in range(20):
            poly = _random_polygon(rng, size)
            mask = rasterize_polygon(round_half_up(np.asarray(poly)), size, size)
            if mask.any():
                break
        else:
            continue
        cid = int(cat_ids[rng.integers(0, len(cat_ids))])
        color = rng.uniform(0, 255, size=3)
        img[mask] = 0.75 * color + 0.25 * img[mask]
        objects.append({"category_id": cid, "polygon": poly})
    return np.clip(img, 0, 255).astype(np.uint8), objects


def random_instance_map(rng: np.random.Generator, width: int, height: int,
                        n_instances: int,
                        dictionary: CategoryDictionary | None = None) -> InstanceMap:
    """Instance map with overlapping random polygons, for task-path tests."""
    dictionary = dictionary or default_dictionary()
    cat_ids = sorted(dictionary.entries)
    counts: dict[int, int] = {}
    records = []
    while len(records) < n_instances:
        poly = _random_polygon(rng, min(width, height))
        mask = rasterize_polygon(round_half_up(np.asarray(poly)), width, height)
        if not mask.any():
            continue
        cid = int(cat_ids[rng.integers(0, len(cat_ids))])
        counts[cid] = counts.get(cid, 0) + 1
        records.append(InstanceRecord(category_id=cid, instance_index=counts[cid],
                                      mask=mask, bbox=mask_bbox(mask)))
    return InstanceMap(width=width, height=height, instances=tuple(records))


def write_corpus(directory, count: int, size: int = 64, seed: int = 0,
                 max_instances: int = 5) -> None:
    """images/NNN.ppm + annotations/NNN.jsonl + dictionary.tsv."""
    rng = np.random.default_rng(seed)
    dictionary = default_dictionary()
    images_dir = os.path.join(directory, "images")
    ann_dir = os.path.join(directory, "annotations")
    os.makedirs(images_dir, exist_ok=True)
    os.makedirs(ann_dir, exist_ok=True)
    dictionary.save(os.path.join(directory, "dictionary.tsv"))
    for i in range(count):
        samples, objects = make_item(rng, size, max_instances=max_instances)
        name = f"im_{i:03d}"
        save_image(RgbImage.from_array(samples),
                   os.path.join(images_dir, f"{name}.ppm"))
        with open(os.path.join(ann_dir, f"{name}.jsonl"), "w",
                  encoding="utf-8") as fh:
            for obj in objects:
                fh.write(json.dumps(obj) + "\n")


def load_corpus(directory) -> tuple[CategoryDictionary, list[CorpusItem]]:
    dictionary = CategoryDictionary.load(os.path.join(directory, "dictionary.tsv"))
    images_dir = os.path.join(directory, "images")
    ann_dir = os.path.join(directory, "annotations")
    items = []
    for fname in sorted(os.listdir(images_dir)):
        if not fname.endswith(".ppm"):
            continue
        name = fname[:-4]
        image = load_image(os.path.join(images_dir, fname))
        imap = ingest_annotations(os.path.join(ann_dir, f"{name}.jsonl"),
                                  dictionary, image.width, image.height)
        items.append(CorpusItem(name=name, image=image, imap=imap))
    return dictionary, items
