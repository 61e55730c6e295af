"""Pydantic request/response models for the codec service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    model_loaded: bool
    model_checksum: str | None = None
    include_profile: bool | None = None


class MaskRle(BaseModel):
    size: list[int] = Field(..., min_length=2, max_length=2)
    counts: list[int]


class TaskInstanceModel(BaseModel):
    category_id: int
    name: str
    bbox: list[int] = Field(..., min_length=4, max_length=4)
    mask_rle: MaskRle


class TasksResponse(BaseModel):
    width: int
    height: int
    instances: list[TaskInstanceModel]


class StreamStatsResponse(BaseModel):
    pixels: int
    bits_s1: int
    bits_s2: int
    bits_s3: int
    total_bits: int
    bpp_s1: float
    bpp_s2: float
    bpp_s3: float
    bpp_total: float
    qp: int | None = None
    flags: list[bool] = Field(..., min_length=3, max_length=3)


class PsnrResponse(BaseModel):
    psnr: float | None  # None encodes +inf (identical images)
    ms_ssim: float
