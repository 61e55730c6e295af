"""Joint optimization of the extractor and predictor under l1 + SSIM.

The objective is lambda * mean|x - x~| - beta * SSIM(x, x~), evaluated in
display range [0, 255] so the standard SSIM constants apply: the l1 term
covers all three channels, SSIM runs on luma with an 11x11 Gaussian
window (sigma 1.5) and mean pooling over window positions.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError
from .networks import CodecModel, save_model
from .nn import ops
from .nn.adam import Adam

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class LossConfig:
    l1_weight: float = 2.0
    ssim_weight: float = 1.0
    k1: float = 0.01
    k2: float = 0.03
    window_size: int = 11
    window_sigma: float = 1.5

    @property
    def c1(self) -> float:
        return (255.0 * self.k1) ** 2

    @property
    def c2(self) -> float:
        return (255.0 * self.k2) ** 2


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 0.02
    batch_size: int = 8
    seed: int = 0
    decay_from: int | None = None  # epoch index; None = epochs // 2

    def lr_at(self, epoch: int) -> float:
        start = self.epochs // 2 if self.decay_from is None else self.decay_from
        if epoch < start or self.epochs <= start:
            return self.lr
        return self.lr * (self.epochs - epoch) / (self.epochs - start)


@dataclass
class LossResult:
    total: float
    l1_term: float
    ssim_term: float
    grad: np.ndarray  # d total / d x~ (display domain)


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def to_luma(x: np.ndarray) -> np.ndarray:
    """(N,3,H,W) -> (N,1,H,W) BT.601 luma."""
    w = LUMA_WEIGHTS.reshape(1, 3, 1, 1)
    return (x * w).sum(axis=1, keepdims=True)


def _window_sum(x: np.ndarray, w_flat: np.ndarray, size: int):
    cols, (oh, ow) = ops.im2col(x, size, 1, 0)
    y = np.matmul(w_flat[None, None, :], cols)
    return y.reshape(x.shape[0], 1, oh, ow)


def _window_sum_adjoint(g: np.ndarray, w_flat: np.ndarray, size: int, x_shape):
    n = g.shape[0]
    g_flat = g.reshape(n, 1, -1)
    cols = w_flat[None, :, None] * g_flat
    return ops.col2im(cols.reshape(n, w_flat.size, -1), (n, 1) + x_shape[2:],
                      size, 1, 0)


def ssim_luma(x: np.ndarray, y: np.ndarray, cfg: LossConfig, with_grad: bool):
    """Mean windowed SSIM over (N,1,H,W) luma pairs; optional d/dy."""
    size = cfg.window_size
    if x.shape[2] < size or x.shape[3] < size:
        raise ValueError(f"images smaller than the {size}x{size} SSIM window")
    w_flat = gaussian_window(size, cfg.window_sigma).ravel()
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    mu_x = _window_sum(x, w_flat, size)
    mu_y = _window_sum(y, w_flat, size)
    var_x = _window_sum(x * x, w_flat, size) - mu_x * mu_x
    var_y = _window_sum(y * y, w_flat, size) - mu_y * mu_y
    cov = _window_sum(x * y, w_flat, size) - mu_x * mu_y
    a1 = 2.0 * mu_x * mu_y + cfg.c1
    a2 = 2.0 * cov + cfg.c2
    b1 = mu_x * mu_x + mu_y * mu_y + cfg.c1
    b2 = var_x + var_y + cfg.c2
    s = (a1 * a2) / (b1 * b2)
    value = float(s.mean())
    if not with_grad:
        return value, None
    gs = np.full_like(s, 1.0 / s.size)
    inv_bb = 1.0 / (b1 * b2)
    g_mu = gs * (2.0 * mu_x * a2 * inv_bb - s * 2.0 * mu_y / b1)
    g_var = gs * (-s / b2)
    g_cov = gs * (2.0 * a1 * inv_bb)
    grad = _window_sum_adjoint(g_mu - 2.0 * mu_y * g_var - mu_x * g_cov,
                               w_flat, size, x.shape)
    grad += 2.0 * y * _window_sum_adjoint(g_var, w_flat, size, x.shape)
    grad += x * _window_sum_adjoint(g_cov, w_flat, size, x.shape)
    return value, grad


def compute_loss(x: np.ndarray, xt: np.ndarray,
                 cfg: LossConfig = LossConfig()) -> LossResult:
    """x, x~ as (N,3,H,W) display-range arrays. Gradient is w.r.t. x~."""
    if x.shape != xt.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {xt.shape}")
    if not (np.isfinite(x).all() and np.isfinite(xt).all()):
        raise TrainingError("non-finite loss input")
    diff = xt.astype(np.float64) - x.astype(np.float64)
    l1 = float(np.abs(diff).mean())
    g_l1 = cfg.l1_weight * np.sign(diff) / diff.size
    ssim, g_ssim_luma = ssim_luma(to_luma(x), to_luma(xt), cfg, with_grad=True)
    g_ssim = g_ssim_luma * LUMA_WEIGHTS.reshape(1, 3, 1, 1)
    total = cfg.l1_weight * l1 - cfg.ssim_weight * ssim
    grad = g_l1 - cfg.ssim_weight * g_ssim
    return LossResult(total=total, l1_term=cfg.l1_weight * l1,
                      ssim_term=cfg.ssim_weight * ssim, grad=grad)


@dataclass(frozen=True)
class TrainExample:
    image: np.ndarray          # (3,H,W) float32 in [-1,1]
    profile_chan: np.ndarray | None  # (1,H,W) float32 in [0,1]


def make_example(image, imap, include_profile: bool = True) -> TrainExample:
    """Pad an (image, instance map) pair to network dims and tensorize it."""
    from .imagery import pad_to_multiple
    from .networks import DOWNSAMPLE, image_to_tensor
    from .profile import encode_profile, profile_to_channel

    padded, _ = pad_to_multiple(image, DOWNSAMPLE)
    chan = None
    if include_profile:
        chan = np.zeros((1, padded.height, padded.width), dtype=np.float32)
        chan[0, :image.height, :image.width] = \
            profile_to_channel(encode_profile(imap))
    return TrainExample(image=image_to_tensor(padded.samples), profile_chan=chan)


@dataclass
class TrainResult:
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)

    @property
    def first_loss(self) -> float:
        return self.trace[0][3]

    @property
    def last_loss(self) -> float:
        return self.trace[-1][3]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "l1_term", "ssim_term", "total"])
            for step, l1, ssim, total in self.trace:
                writer.writerow([step, f"{l1:.6f}", f"{ssim:.6f}", f"{total:.6f}"])


def train(dataset: list[TrainExample], model: CodecModel, config: TrainConfig,
          loss_config: LossConfig = LossConfig(), checkpoint_dir=None,
          log=None) -> TrainResult:
    """Optimize both networks jointly; deterministic under a fixed seed."""
    if not dataset:
        raise ValueError("empty training set")
    include_profile = model.include_profile
    if include_profile and any(ex.profile_chan is None for ex in dataset):
        raise ValueError("model wants profile channels but the dataset has none")
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.params(), lr=config.lr)
    result = TrainResult()
    step = 0
    n = len(dataset)
    batches_per_epoch = max(1, math.ceil(n / config.batch_size))
    for epoch in range(config.epochs):
        opt.lr = config.lr_at(epoch)
        order = rng.permutation(n)
        for b in range(batches_per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            if idx.size == 0:
                continue
            x = np.stack([dataset[i].image for i in idx])
            chan = (np.stack([dataset[i].profile_chan for i in idx])
                    if include_profile else None)
            opt.zero_grad()
            loss = _forward_backward(model, x, chan, loss_config)
            if not math.isfinite(loss.total):
                raise TrainingError(f"non-finite loss at step {step}: {loss.total}")
            opt.step()
            step += 1
            result.trace.append((step, loss.l1_term, loss.ssim_term, loss.total))
            if log is not None:
                log(step, loss)
        if checkpoint_dir is not None:
            os.makedirs(checkpoint_dir, exist_ok=True)
            save_model(model, os.path.join(checkpoint_dir, f"epoch_{epoch+1:04d}.lcw"))
    return result


def _forward_backward(model: CodecModel, x, chan, loss_config) -> LossResult:
    y = model.le.forward(x, chan)
    xt = model.ip.forward(y, chan, clamp=False)
    x_disp = (x.astype(np.float64) + 1.0) * 127.5
    xt_disp = (xt.astype(np.float64) + 1.0) * 127.5
    loss = compute_loss(x_disp, xt_disp, loss_config)
    dxt = (loss.grad * 127.5).astype(x.dtype)
    dy = model.ip.backward(dxt)
    model.le.backward(dy)
    return loss
