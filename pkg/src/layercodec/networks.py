"""The two codec networks: a low-level feature extractor that squeezes the
image (plus profile channel) down to 3 channels at 1/8 resolution, and an
image predictor that rebuilds a general-quality image from those features
and the profile.

Pixel tensors live in [-1, 1]; the profile channel in [0, 1]. Feature
quantization to 8 bits happens only at encode time; training runs on the
continuous features.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .nn import layers as L
from .nn import ops
from .nn.checkpoint import load_checkpoint, params_checksum, save_checkpoint

DOWNSAMPLE = 8
BASE_WIDTHS = (64, 128, 256, 512)
FEATURE_CHANNELS = 3


@dataclass(frozen=True)
class LeConfig:
    norm_kind: str = "channel"
    width_divisor: int = 1
    include_profile: bool = True
    widths: tuple[int, ...] = BASE_WIDTHS

    def real_widths(self):
        return tuple(max(w // self.width_divisor, 4) for w in self.widths)


@dataclass(frozen=True)
class IpConfig:
    norm_kind: str = "channel"
    width_divisor: int = 1
    include_profile: bool = True
    widths: tuple[int, ...] = BASE_WIDTHS
    n_resblocks: int = 9

    def real_widths(self):
        return tuple(max(w // self.width_divisor, 4) for w in self.widths)


@dataclass(frozen=True)
class FeaturePlanes:
    """8-bit quantized low-level features, 3 channels at 1/8 resolution."""

    quantized: np.ndarray  # uint8, (3, H/8, W/8)

    def __post_init__(self):
        if self.quantized.dtype != np.uint8 or self.quantized.shape[0] != FEATURE_CHANNELS:
            raise ValueError("expected uint8 (3, h, w) feature planes")


def quantize_features(y: np.ndarray) -> np.ndarray:
    """tanh output [-1, 1] -> uint8; halves round away from zero."""
    q = np.floor((y + 1.0) * 127.5 + 0.5)
    return np.clip(q, 0, 255).astype(np.uint8)


def dequantize_features(q: np.ndarray) -> np.ndarray:
    return (q.astype(np.float32) / np.float32(127.5)) - np.float32(1.0)


def image_to_tensor(samples: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> (3, H, W) float32 in [-1, 1]."""
    t = samples.astype(np.float32) / np.float32(127.5) - np.float32(1.0)
    return np.ascontiguousarray(t.transpose(2, 0, 1))


def tensor_to_display(t: np.ndarray) -> np.ndarray:
    """[-1, 1] tensor -> integer display samples in [0, 255], (..., H, W) kept."""
    d = np.floor((t + 1.0) * 127.5 + 0.5)
    return np.clip(d, 0, 255).astype(np.int16)


class LowLevelExtractor:
    """Conv stack: 7x7 head, three stride-2 layers, 3-channel tanh tail."""

    def __init__(self, config: LeConfig, rng: np.random.Generator):
        self.config = config
        w1, w2, w3, w4 = config.real_widths()
        cin = 3 + (1 if config.include_profile else 0)
        nk = config.norm_kind
        self.net = L.Sequential([
            L.Conv2d(cin, w1, 7, 1, rng, "le.conv1"),
            L.Norm(nk, w1, "le.norm1"), L.ReLU(),
            L.Conv2d(w1, w2, 3, 2, rng, "le.conv2"),
            L.Norm(nk, w2, "le.norm2"), L.ReLU(),
            L.Conv2d(w2, w3, 3, 2, rng, "le.conv3"),
            L.Norm(nk, w3, "le.norm3"), L.ReLU(),
            L.Conv2d(w3, w4, 3, 2, rng, "le.conv4"),
            L.Norm(nk, w4, "le.norm4"), L.ReLU(),
            L.Conv2d(w4, FEATURE_CHANNELS, 3, 1, rng, "le.conv5"),
            L.Tanh(),
        ])

    def params(self):
        return self.net.params()

    def forward(self, x: np.ndarray, profile_chan: np.ndarray | None) -> np.ndarray:
        """x (N,3,H,W) in [-1,1]; profile_chan (N,1,H,W) in [0,1] or None."""
        n, _, h, w = x.shape
        if h % DOWNSAMPLE or w % DOWNSAMPLE:
            raise ValueError(f"dims {h}x{w} not divisible by {DOWNSAMPLE}; pad first")
        if self.config.include_profile:
            if profile_chan is None:
                raise ValueError("this extractor wants a profile channel")
            x = np.concatenate([x, profile_chan], axis=1)
        return self.net.forward(x)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return self.net.backward(dy)


class ImagePredictor:
    """Autoencoder-shaped predictor applied to upsampled features + profile.

    The body only predicts a correction: its tanh output is added to the
    nearest-upsampled features, then clamped to [-1, 1]. Zeroing the last
    conv layer therefore yields the upsampled features exactly.
    """

    def __init__(self, config: IpConfig, rng: np.random.Generator):
        self.config = config
        w1, w2, w3, w4 = config.real_widths()
        cin = FEATURE_CHANNELS + (1 if config.include_profile else 0)
        nk = config.norm_kind
        body = [
            L.Conv2d(cin, w1, 7, 1, rng, "ip.conv1"),
            L.Norm(nk, w1, "ip.norm1"), L.ReLU(),
            L.Conv2d(w1, w2, 3, 2, rng, "ip.conv2"),
            L.Norm(nk, w2, "ip.norm2"), L.ReLU(),
            L.Conv2d(w2, w3, 3, 2, rng, "ip.conv3"),
            L.Norm(nk, w3, "ip.norm3"), L.ReLU(),
            L.Conv2d(w3, w4, 3, 2, rng, "ip.conv4"),
            L.Norm(nk, w4, "ip.norm4"), L.ReLU(),
        ]
        body += [L.ResBlock(w4, nk, rng, f"ip.res{i+1}")
                 for i in range(config.n_resblocks)]
        body += [
            L.ConvTranspose2d(w4, w3, 3, 2, rng, "ip.tconv1"),
            L.Norm(nk, w3, "ip.tnorm1"), L.ReLU(),
            L.ConvTranspose2d(w3, w2, 3, 2, rng, "ip.tconv2"),
            L.Norm(nk, w2, "ip.tnorm2"), L.ReLU(),
            L.ConvTranspose2d(w2, w1, 3, 2, rng, "ip.tconv3"),
            L.Norm(nk, w1, "ip.tnorm3"), L.ReLU(),
            L.Conv2d(w1, 3, 3, 1, rng, "ip.conv_out"),
            L.Tanh(),
        ]
        self.net = L.Sequential(body)
        self._cache = None

    def params(self):
        return self.net.params()

    def forward(self, y: np.ndarray, profile_chan: np.ndarray | None,
                clamp: bool = True) -> np.ndarray:
        """y (N,3,h,w) dequantized features; returns x~ (N,3,8h,8w).

        clamp=True (the coded output) limits x~ to [-1, 1]. Training runs
        with clamp=False: a hard clamp zeroes the gradient of every
        saturated pixel, which ratchets the optimizer into dead ends at
        high learning rates, while the plain sum keeps the loss pushing
        out-of-range pixels back.
        """
        u, up_cache = ops.upsample_nearest_forward(y, DOWNSAMPLE)
        if self.config.include_profile:
            if profile_chan is None:
                raise ValueError("this predictor wants a profile channel")
            if profile_chan.shape[2:] != u.shape[2:]:
                raise ValueError(f"profile channel {profile_chan.shape[2:]} does not "
                                 f"match upsampled features {u.shape[2:]}")
            net_in = np.concatenate([u, profile_chan], axis=1)
        else:
            net_in = u
        f = self.net.forward(net_in)
        if clamp:
            out, clamp_mask = ops.clamp_forward(u + f, -1.0, 1.0)
        else:
            out, clamp_mask = u + f, None
        self._cache = (up_cache, clamp_mask)
        return out

    def backward(self, dxt: np.ndarray) -> np.ndarray:
        """Returns the gradient w.r.t. the continuous features y."""
        up_cache, clamp_mask = self._cache
        dsum = dxt if clamp_mask is None else ops.clamp_backward(dxt, clamp_mask)
        dnet_in = self.net.backward(dsum)
        du = dnet_in[:, :FEATURE_CHANNELS] + dsum
        return ops.upsample_nearest_backward(du, up_cache)


@dataclass
class CodecModel:
    """Bundle the container pipeline carries around: both nets plus identity."""

    le: LowLevelExtractor
    ip: ImagePredictor
    le_config: LeConfig
    ip_config: IpConfig
    seed: int = 0

    @property
    def include_profile(self) -> bool:
        return self.le_config.include_profile

    def params(self):
        return self.le.params() + self.ip.params()

    @property
    def checksum(self) -> int:
        return params_checksum(self.params())


def build_model(norm_kind="channel", width_divisor=1, include_profile=True,
                n_resblocks=9, seed=0) -> CodecModel:
    le_cfg = LeConfig(norm_kind=norm_kind, width_divisor=width_divisor,
                      include_profile=include_profile)
    ip_cfg = IpConfig(norm_kind=norm_kind, width_divisor=width_divisor,
                      include_profile=include_profile, n_resblocks=n_resblocks)
    rng = np.random.default_rng(seed)
    return CodecModel(le=LowLevelExtractor(le_cfg, rng),
                      ip=ImagePredictor(ip_cfg, rng),
                      le_config=le_cfg, ip_config=ip_cfg, seed=seed)


def save_model(model: CodecModel, path) -> None:
    config = {
        "le": asdict(model.le_config),
        "ip": asdict(model.ip_config),
        "seed": model.seed,
    }
    save_checkpoint(path, model.params(), config)


def load_model(path) -> CodecModel:
    config, values, _ = load_checkpoint(path)
    le_cfg = LeConfig(**{**config["le"], "widths": tuple(config["le"]["widths"])})
    ip_cfg = IpConfig(**{**config["ip"], "widths": tuple(config["ip"]["widths"])})
    model = build_model(norm_kind=le_cfg.norm_kind,
                        width_divisor=le_cfg.width_divisor,
                        include_profile=le_cfg.include_profile,
                        n_resblocks=ip_cfg.n_resblocks,
                        seed=config.get("seed", 0))
    for p in model.params():
        if p.name not in values:
            raise KeyError(f"checkpoint is missing parameter {p.name}")
        if values[p.name].shape != p.value.shape:
            raise ValueError(f"shape mismatch for {p.name}: "
                             f"{values[p.name].shape} vs {p.value.shape}")
        p.value[...] = values[p.name]
    return model
