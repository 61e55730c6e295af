"""The codec as a long-running service.

The app holds one loaded model (weights path given at construction or via
the LAYERCODEC_WEIGHTS environment variable) plus the category dictionary,
and exposes the codec over HTTP:

    GET  /health
    POST /encode          image + annotations (+ optional dictionary) -> container
    POST /decode/tasks    container -> task JSON
    POST /decode/image    container + level -> PPM bytes
    POST /stats           container -> per-stream bits and bpp
    POST /metrics/quality reference + test PPM -> PSNR / MS-SSIM
"""

from __future__ import annotations

import math
import os

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import Response

from .. import container as C
from .. import metrics
from ..corpus import default_dictionary
from ..errors import LayercodecError, MissingStreamError, ModelMismatchError
from ..imagery import CategoryDictionary, decode_ppm, encode_ppm, parse_annotations
from ..networks import load_model
from ..profile import tasks_to_json
from ..residual import QpSetting
from . import schemas

PPM_MEDIA = "image/x-portable-pixmap"
CONTAINER_MEDIA = "application/octet-stream"


def _error_status(exc: LayercodecError) -> int:
    if isinstance(exc, (MissingStreamError, ModelMismatchError)):
        return 409
    return 400


def create_app(weights_path: str | None = None,
               dictionary: CategoryDictionary | None = None) -> FastAPI:
    weights_path = weights_path or os.environ.get("LAYERCODEC_WEIGHTS")
    model = load_model(weights_path) if weights_path else None
    dictionary = dictionary or default_dictionary()
    app = FastAPI(title="layercodec", version="0.1.0")

    @app.exception_handler(LayercodecError)
    async def _codec_error(request, exc: LayercodecError):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=_error_status(exc),
                            content={"detail": str(exc)})

    def _need_model():
        if model is None:
            raise HTTPException(status_code=503, detail="no weights loaded")
        return model

    @app.get("/health", response_model=schemas.HealthResponse)
    async def health():
        return schemas.HealthResponse(
            status="ok",
            model_loaded=model is not None,
            model_checksum=f"{model.checksum:#010x}" if model else None,
            include_profile=model.include_profile if model else None,
        )

    @app.post("/encode", response_class=Response)
    async def encode(image: UploadFile = File(...),
                     annotations: UploadFile | None = File(None),
                     dictionary_file: UploadFile | None = File(None),
                     qp: int | None = Form(None)):
        m = _need_model()
        img = decode_ppm(await image.read())
        imap = None
        if m.include_profile:
            if annotations is None:
                raise HTTPException(status_code=422,
                                    detail="annotations file required: the loaded "
                                           "model uses the instance profile")
            cat = dictionary
            if dictionary_file is not None:
                cat = CategoryDictionary.parse(
                    (await dictionary_file.read()).decode("utf-8"))
            imap = parse_annotations((await annotations.read()).decode("utf-8"),
                                     cat, img.width, img.height)
        setting = QpSetting(qp) if qp is not None else None
        result = C.encode(img, imap, m, setting)
        return Response(content=result.data, media_type=CONTAINER_MEDIA)

    @app.post("/decode/tasks", response_model=schemas.TasksResponse)
    async def decode_tasks_endpoint(container: UploadFile = File(...)):
        data = await container.read()
        result = C.decode(data, "tasks")
        header = result.header
        return schemas.TasksResponse(
            width=header.original_size[0], height=header.original_size[1],
            instances=tasks_to_json(result.tasks, dictionary))

    @app.post("/decode/image", response_class=Response)
    async def decode_image(container: UploadFile = File(...),
                           level: str = Form("general")):
        if level not in ("general", "high"):
            raise HTTPException(status_code=422,
                                detail=f"level must be general or high, not {level!r}")
        m = _need_model()
        data = await container.read()
        result = C.decode(data, level, m)
        image = result.high if level == "high" else result.general
        return Response(content=encode_ppm(image), media_type=PPM_MEDIA)

    @app.post("/stats", response_model=schemas.StreamStatsResponse)
    async def stats(container: UploadFile = File(...)):
        data = await container.read()
        header = C.read_header(data)
        s = C.stream_stats(data)
        return schemas.StreamStatsResponse(
            pixels=s.pixels,
            bits_s1=s.bits[0], bits_s2=s.bits[1], bits_s3=s.bits[2],
            total_bits=s.total_bits,
            bpp_s1=s.bpp(0), bpp_s2=s.bpp(1), bpp_s3=s.bpp(2),
            bpp_total=s.total_bpp,
            qp=header.qp if header.has(C.FLAG_RESIDUAL) else None,
            flags=[header.has(C.FLAG_PROFILE), header.has(C.FLAG_FEATURES),
                   header.has(C.FLAG_RESIDUAL)])

    @app.post("/metrics/quality", response_model=schemas.PsnrResponse)
    async def quality(reference: UploadFile = File(...),
                      test: UploadFile = File(...)):
        ref = decode_ppm(await reference.read())
        img = decode_ppm(await test.read())
        value = metrics.psnr(ref.samples, img.samples)
        return schemas.PsnrResponse(
            psnr=None if math.isinf(value) else value,
            ms_ssim=metrics.ms_ssim(ref.samples, img.samples))

    return app
