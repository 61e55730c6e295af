"""Layered image codec for machine tasks and human viewing.

Three independently decodable streams: a lossless 16-bit instance profile
(machine tasks), lossless low-level features (general-quality image), and
a lossy residual (high-quality image).
"""

from .container import decode, encode, stream_stats
from .imagery import (CategoryDictionary, InstanceMap, InstanceRecord, RgbImage,
                      ingest_annotations, load_image, pad_to_multiple, save_image)
from .networks import CodecModel, build_model, load_model, save_model
from .profile import (GrayProfile, TaskInstance, decode_tasks, encode_profile,
                      pack_value, unpack_value)
from .residual import QpSetting

__version__ = "0.1.0"

__all__ = [
    "CategoryDictionary", "CodecModel", "GrayProfile", "InstanceMap",
    "InstanceRecord", "QpSetting", "RgbImage", "TaskInstance", "build_model",
    "decode", "decode_tasks", "encode", "encode_profile", "ingest_annotations",
    "load_image", "load_model", "pack_value", "pad_to_multiple", "save_image",
    "save_model", "stream_stats", "unpack_value", "__version__",
]
