"""Thin HTTP client for the codec service.

The CLI routes encode/decode/stats through this client. With a server URL
it speaks real HTTP; without one it mounts the FastAPI app in-process over
an ASGI transport, so the same request/response path runs either way.
"""

from __future__ import annotations

import httpx

from .errors import LayercodecError


class ServiceError(LayercodecError):
    """The service answered with an error status."""


class CodecClient:
    def __init__(self, server: str | None = None, weights: str | None = None,
                 dictionary=None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=300.0)
        else:
            from .service import create_app
            transport = httpx.ASGITransport(app=create_app(weights, dictionary))
            self._client = httpx.Client(transport=transport,
                                        base_url="http://layercodec.local",
                                        timeout=None)

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _check(self, resp: httpx.Response) -> httpx.Response:
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except Exception:
                detail = resp.text
            raise ServiceError(f"{resp.status_code}: {detail}")
        return resp

    def health(self) -> dict:
        return self._check(self._client.get("/health")).json()

    def encode(self, image: bytes, annotations: bytes | None = None,
               dictionary: bytes | None = None, qp: int | None = None) -> bytes:
        files = {"image": ("image.ppm", image)}
        if annotations is not None:
            files["annotations"] = ("annotations.jsonl", annotations)
        if dictionary is not None:
            files["dictionary_file"] = ("dictionary.tsv", dictionary)
        data = {}
        if qp is not None:
            data["qp"] = str(qp)
        resp = self._client.post("/encode", files=files, data=data)
        return self._check(resp).content

    def decode_tasks(self, container: bytes) -> dict:
        resp = self._client.post("/decode/tasks",
                                 files={"container": ("c.lmc", container)})
        return self._check(resp).json()

    def decode_image(self, container: bytes, level: str) -> bytes:
        resp = self._client.post("/decode/image",
                                 files={"container": ("c.lmc", container)},
                                 data={"level": level})
        return self._check(resp).content

    def stats(self, container: bytes) -> dict:
        resp = self._client.post("/stats",
                                 files={"container": ("c.lmc", container)})
        return self._check(resp).json()

    def quality(self, reference: bytes, test: bytes) -> dict:
        resp = self._client.post("/metrics/quality",
                                 files={"reference": ("a.ppm", reference),
                                        "test": ("b.ppm", test)})
        return self._check(resp).json()
