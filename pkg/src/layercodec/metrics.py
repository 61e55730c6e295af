"""Quality and task metrics: PSNR, MS-SSIM, IoU, COCO-style mAP, RD sweeps.

mAP averages the per-category average precision over the ten IoU
thresholds 0.50, 0.55, ..., 0.95, counting only categories present in the
ground truth. Detections decoded from the profile all carry score 1.0, so
ties are broken deterministically by (category_id, instance_index).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .trainer import LossConfig, gaussian_window

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


# ---------------------------------------------------------------------------
# Signal quality


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(255^2 / MSE); +inf for identical inputs."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean(np.square(a.astype(np.float64) - b.astype(np.float64))))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _to_luma_hw(samples: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 or (H, W) -> float64 luma (H, W)."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 3:
        return arr @ np.array([0.299, 0.587, 0.114])
    return arr


def _ssim_components(x: np.ndarray, y: np.ndarray, cfg: LossConfig):
    """Mean luminance term and mean contrast-structure term, windowed."""
    size = cfg.window_size
    window = gaussian_window(size, cfg.window_sigma)
    wx = sliding_window_view(x, (size, size))
    wy = sliding_window_view(y, (size, size))
    mu_x = np.tensordot(wx, window, axes=([2, 3], [0, 1]))
    mu_y = np.tensordot(wy, window, axes=([2, 3], [0, 1]))
    xx = np.tensordot(wx * wx, window, axes=([2, 3], [0, 1]))
    yy = np.tensordot(wy * wy, window, axes=([2, 3], [0, 1]))
    xy = np.tensordot(wx * wy, window, axes=([2, 3], [0, 1]))
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y
    lum = (2 * mu_x * mu_y + cfg.c1) / (mu_x * mu_x + mu_y * mu_y + cfg.c1)
    cs = (2 * cov + cfg.c2) / (var_x + var_y + cfg.c2)
    return float((lum * cs).mean()), float(cs.mean())


def _downsample2(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return (x[0::2, 0::2] + x[0::2, 1::2] + x[1::2, 0::2] + x[1::2, 1::2]) / 4.0


def ms_ssim(a: np.ndarray, b: np.ndarray, scales: int | None = None,
            cfg: LossConfig = LossConfig()) -> float:
    """Multi-scale SSIM on luma, display range [0, 255].

    Runs the standard 5 scales when the smallest side allows it (>= 176
    keeps the last scale at least one full window); otherwise the largest
    feasible scale count is used and the published exponents are
    renormalized to sum to one.
    """
    x = _to_luma_hw(a)
    y = _to_luma_hw(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    smallest = min(x.shape)
    feasible = 0
    while feasible < len(MSSSIM_WEIGHTS) and smallest >= cfg.window_size:
        feasible += 1
        smallest //= 2
    if feasible == 0:
        raise ValueError(f"image side {min(x.shape)} is smaller than the "
                         f"{cfg.window_size}x{cfg.window_size} SSIM window")
    n_scales = feasible if scales is None else scales
    if n_scales > feasible:
        raise ValueError(f"only {feasible} scales feasible for {x.shape}")
    weights = np.asarray(MSSSIM_WEIGHTS[:n_scales], dtype=np.float64)
    weights = weights / weights.sum()
    value = 1.0
    for scale in range(n_scales):
        lum_cs, cs = _ssim_components(x, y, cfg)
        if scale == n_scales - 1:
            value *= _signed_pow(lum_cs, weights[scale])
        else:
            value *= _signed_pow(cs, weights[scale])
            x = _downsample2(x)
            y = _downsample2(y)
    return float(value)


def _signed_pow(v: float, p: float) -> float:
    # cs can dip below zero on pathological pairs; keep the power real.
    return math.copysign(abs(v) ** p, v)


# ---------------------------------------------------------------------------
# Task metrics


@dataclass(frozen=True)
class Detection:
    """One detection or ground-truth instance for the matcher."""

    category_id: int
    bbox: tuple[int, int, int, int]      # inclusive (x0, y0, x1, y1)
    mask: np.ndarray | None = None
    score: float = 1.0
    instance_index: int = 0


def bbox_iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0) + 1
    ih = min(ay1, by1) - max(ay0, by0) + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (ax1 - ax0 + 1) * (ay1 - ay0 + 1)
    area_b = (bx1 - bx0 + 1) * (by1 - by0 + 1)
    return inter / (area_a + area_b - inter)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = int(np.logical_and(a, b).sum())
    union = int(np.logical_or(a, b).sum())
    return inter / union if union else 0.0


def _det_iou(a: Detection, b: Detection, mode: str) -> float:
    if mode == "bbox":
        return bbox_iou(a.bbox, b.bbox)
    if mode == "mask":
        if a.mask is None or b.mask is None:
            raise ValueError("mask mode needs masks on every detection")
        return mask_iou(a.mask, b.mask)
    raise ValueError(f"unknown IoU mode {mode!r}")


def _sorted_dets(dets) -> list[Detection]:
    return sorted(dets, key=lambda d: (-d.score, d.category_id, d.instance_index))


def average_precision(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """All-point interpolation: area under the precision envelope."""
    mrec = np.concatenate(([0.0], recalls, [1.0]))
    mpre = np.concatenate(([0.0], precisions, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _ap_single(dets: list[Detection], gts: list[Detection],
               iou: np.ndarray, threshold: float) -> float:
    """Greedy score-ordered matching at one threshold; dets pre-sorted."""
    if not gts:
        return 0.0
    matched = [False] * len(gts)
    tp = np.zeros(len(dets))
    for di in range(len(dets)):
        best, best_gi = threshold, -1
        for gi in range(len(gts)):
            if not matched[gi] and iou[di, gi] >= best:
                best, best_gi = iou[di, gi], gi
        if best_gi >= 0:
            matched[best_gi] = True
            tp[di] = 1.0
    if not len(dets):
        return 0.0
    cum_tp = np.cumsum(tp)
    recalls = cum_tp / len(gts)
    precisions = cum_tp / np.arange(1, len(dets) + 1)
    return average_precision(recalls, precisions)


def map_evaluate(dets, gts, mode: str = "mask",
                 thresholds=IOU_THRESHOLDS) -> float:
    """Mean AP over IoU thresholds and the categories present in gts."""
    gts = list(gts)
    dets = _sorted_dets(dets)
    categories = sorted({g.category_id for g in gts})
    if not categories:
        if dets:
            warnings.warn("detections against an empty ground truth: mAP 0")
        return 0.0
    aps = []
    for cat in categories:
        cat_dets = [d for d in dets if d.category_id == cat]
        cat_gts = [g for g in gts if g.category_id == cat]
        iou = np.array([[_det_iou(d, g, mode) for g in cat_gts]
                        for d in cat_dets]).reshape(len(cat_dets), len(cat_gts))
        for t in thresholds:
            aps.append(_ap_single(cat_dets, cat_gts, iou, t))
    return float(np.mean(aps))


def task_instances_to_detections(instances) -> list[Detection]:
    return [Detection(category_id=t.category_id, bbox=t.bbox, mask=t.mask,
                      score=1.0, instance_index=t.instance_index)
            for t in instances]


# ---------------------------------------------------------------------------
# Rate-distortion sweep


@dataclass(frozen=True)
class RdPoint:
    image_id: str
    qp: int
    bpp_s1: float
    bpp_s2: float
    bpp_s3: float
    bpp_total: float
    psnr_general: float
    psnr_high: float
    msssim_general: float
    msssim_high: float
    map_det: float
    map_seg: float


RD_CSV_FIELDS = ["image_id", "qp", "bpp_s1", "bpp_s2", "bpp_s3", "bpp_total",
                 "psnr_general", "psnr_high", "msssim_general", "msssim_high",
                 "map_det", "map_seg"]


def rd_sweep(items, model, qps, on_error=None) -> list[RdPoint]:
    """Encode/decode every (name, image, instance map) item at every qp.

    Stage errors are reported per image via on_error and the sweep
    continues with the rest of the corpus.
    """
    from . import container as C
    from .profile import decode_tasks, encode_profile
    from .residual import QpSetting, decode_residual, reconstruct_high
    from .imagery import crop_to_original

    points: list[RdPoint] = []
    for name, image, imap in items:
        try:
            prepared = C.prepare_encode(image, imap, model)
            base = C.finish_encode(prepared, None).data
            decoded = C.decode(base, "general", model)
            general = decoded.general
            p_general = psnr(image.samples, general.samples)
            m_general = ms_ssim(image.samples, general.samples)
            if model.include_profile:
                gt = task_instances_to_detections(
                    decode_tasks(encode_profile(imap)))
                got = task_instances_to_detections(decoded.tasks)
                m_det = map_evaluate(got, gt, mode="bbox")
                m_seg = map_evaluate(got, gt, mode="mask")
            else:
                m_det = m_seg = 0.0
            pixels = image.width * image.height
            for qp in qps:
                result = C.finish_encode(prepared, QpSetting(qp))
                header = result.header
                stream3 = result.data[header.stream_offset(2):]
                res, _ = decode_residual(stream3, header.padded_size[1],
                                         header.padded_size[0])
                high_display = reconstruct_high(prepared.general_display, res)
                high = crop_to_original(high_display.transpose(1, 2, 0),
                                        header.original_size)
                bits = [8 * n for n in header.stream_lengths]
                points.append(RdPoint(
                    image_id=name, qp=qp,
                    bpp_s1=bits[0] / pixels, bpp_s2=bits[1] / pixels,
                    bpp_s3=bits[2] / pixels, bpp_total=sum(bits) / pixels,
                    psnr_general=p_general,
                    psnr_high=psnr(image.samples, high),
                    msssim_general=m_general,
                    msssim_high=ms_ssim(image.samples, high),
                    map_det=m_det, map_seg=m_seg))
        except Exception as exc:  # keep sweeping the rest of the corpus
            if on_error is None:
                raise
            on_error(name, exc)
    return points


def write_rd_csv(points, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RD_CSV_FIELDS)
        for p in points:
            writer.writerow([p.image_id, p.qp] +
                            [_fmt(getattr(p, f)) for f in RD_CSV_FIELDS[2:]])


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf"
    return f"{v:.6f}"
