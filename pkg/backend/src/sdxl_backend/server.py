"""HTTP service implementing the generation wire protocol.

POST /generate  JSON {image_b64, depth_b64, canny_b64, prompt,
                      negative_prompt, control_scale, guidance_scale,
                      steps, seed} -> 200 PNG body
POST /caption   JSON {image_b64} -> {"caption": str}
GET  /healthz   -> {"status", "mode", "models"}

Generations are serialized through a bounded slot pool; requests beyond the
bound get 503 with Retry-After so batch clients back off and retry.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
from PIL import Image

from .config import BackendConfig
from .engines import build_engines

log = logging.getLogger("sdxl_backend")


class FieldError(ValueError):
    """Malformed request payload; carries the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


def _decode_image(body: dict, field: str) -> np.ndarray:
    value = body.get(field)
    if not isinstance(value, str) or not value:
        raise FieldError(field, "required base64 PNG string")
    try:
        raw = base64.b64decode(value, validate=True)
        array = np.asarray(Image.open(io.BytesIO(raw)))
    except Exception as exc:
        raise FieldError(field, f"not a decodable base64 PNG: {exc}") from exc
    if array.dtype == np.int32:
        array = array.astype(np.uint16)
    return array


def _number(body: dict, field: str, default, minimum=None, maximum=None):
    value = body.get(field, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise FieldError(field, "must be a number")
    if minimum is not None and value < minimum:
        raise FieldError(field, f"must be >= {minimum}")
    if maximum is not None and value > maximum:
        raise FieldError(field, f"must be <= {maximum}")
    return value


def _text(body: dict, field: str, default=None) -> str:
    value = body.get(field, default)
    if not isinstance(value, str):
        raise FieldError(field, "must be a string")
    return value


class GenerationService:
    """Engine wrapper with the request-validation and concurrency policy."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self.generator, self.captioner = build_engines(config)
        self._slots = threading.Semaphore(config.max_concurrent)

    def try_acquire(self) -> bool:
        return self._slots.acquire(blocking=False)

    def release(self) -> None:
        self._slots.release()

    def generate(self, body: dict) -> bytes:
        image = _decode_image(body, "image_b64")
        if image.ndim != 3 or image.shape[2] < 3:
            raise FieldError("image_b64", "must decode to an RGB image")
        image = image[..., :3].astype(np.uint8)
        depth = _decode_image(body, "depth_b64")
        canny = _decode_image(body, "canny_b64")
        if depth.ndim != 2:
            raise FieldError("depth_b64", "must decode to a single-channel image")
        if canny.ndim != 2:
            raise FieldError("canny_b64", "must decode to a single-channel image")
        if depth.shape != image.shape[:2]:
            raise FieldError("depth_b64", f"dimensions {depth.shape} differ from image")
        if canny.shape != image.shape[:2]:
            raise FieldError("canny_b64", f"dimensions {canny.shape} differ from image")

        seed = body.get("seed")
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise FieldError("seed", "must be an integer")

        generated = self.generator.generate(
            image=image,
            depth=depth,
            canny=canny.astype(np.uint8),
            prompt=_text(body, "prompt"),
            negative_prompt=_text(body, "negative_prompt", default=""),
            control_scale=float(
                _number(body, "control_scale", self.config.control_scale, 0.0, 1.0)
            ),
            guidance_scale=float(_number(body, "guidance_scale", self.config.guidance_scale, 0.0)),
            steps=int(_number(body, "steps", self.config.steps, 1)),
            seed=seed,
        )
        buffer = io.BytesIO()
        Image.fromarray(generated).save(buffer, format="PNG")
        return buffer.getvalue()

    def caption(self, body: dict) -> str:
        image = _decode_image(body, "image_b64")
        if image.ndim == 2:
            image = np.stack([image.astype(np.uint8)] * 3, axis=-1)
        return self.captioner.caption(image[..., :3].astype(np.uint8))


class _Handler(BaseHTTPRequestHandler):
    service: GenerationService  # set by make_server

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def do_GET(self):
        if self.path != "/healthz":
            self._send_json(404, {"error": "not found"})
            return
        self._send_json(
            200,
            {
                "status": "ok",
                "mode": self.service.config.mode,
                "models": self.service.config.model_identifiers(),
            },
        )

    def do_POST(self):
        if self.path not in ("/generate", "/caption"):
            self._send_json(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length))
            if not isinstance(body, dict):
                raise ValueError("body must be a JSON object")
        except (ValueError, json.JSONDecodeError) as exc:
            self._send_json(400, {"error": {"body": str(exc)}})
            return

        if self.path == "/caption":
            self._handle(lambda: self._send_caption(body))
        else:
            if not self.service.try_acquire():
                self.send_response(503)
                self.send_header("Retry-After", "1")
                self.end_headers()
                return
            try:
                self._handle(lambda: self._send_png(self.service.generate(body)))
            finally:
                self.service.release()

    def _handle(self, action):
        try:
            action()
        except FieldError as exc:
            self._send_json(400, {"error": {exc.field: str(exc)}})
        except Exception as exc:
            log.exception("inference failure")
            self._send_json(500, {"error": str(exc)})

    def _send_caption(self, body):
        self._send_json(200, {"caption": self.service.caption(body)})

    def _send_png(self, payload: bytes):
        self.send_response(200)
        self.send_header("Content-Type", "image/png")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _send_json(self, status: int, doc: dict):
        payload = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


def make_server(config: BackendConfig, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; port 0 picks a free port."""
    service = GenerationService(config)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve(config: BackendConfig, host: str = "0.0.0.0", port: int = 8676) -> None:
    """Run the service until interrupted."""
    server = make_server(config, host, port)
    log.info("serving %s mode on %s:%d", config.mode, *server.server_address)
    try:
        server.serve_forever()
    finally:
        server.server_close()
