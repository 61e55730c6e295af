"""Minimal deterministic tensor kernel: the fixed layer set the codec networks
use, with hand-derived backward passes, Adam, and checkpoint io."""

from .adam import Adam
from .layers import (Conv2d, ConvTranspose2d, Norm, Parameter, ReLU, ResBlock,
                     Sequential, Tanh)
from .checkpoint import load_checkpoint, params_checksum, save_checkpoint

__all__ = [
    "Adam", "Conv2d", "ConvTranspose2d", "Norm", "Parameter", "ReLU",
    "ResBlock", "Sequential", "Tanh", "load_checkpoint", "params_checksum",
    "save_checkpoint",
]
