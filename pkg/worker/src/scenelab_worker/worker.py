"""The worker loop: connect, register, answer classify requests.

One classify is processed at a time, in arrival order. A lost connection is
retried forever with capped exponential backoff, re-registering on every
successful connect (the server treats re-registration as a replace).
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import logging
from typing import Iterable

from . import wire
from .detector import InvalidImageError, ModelFn, load_torchvision_model, run_model
from .labels import COCO_CLASSES

logger = logging.getLogger(__name__)

DEFAULT_BACKEND_ID = "faster-rcnn"


def backoff_delay(attempt: int, base: float = 0.5, cap: float = 15.0) -> float:
    """Delay before reconnect attempt N (0-based): base doubled, capped."""
    return min(cap, base * 2 ** max(0, attempt))


class DetectionWorker:
    """Serves one detection model to one examination server."""

    def __init__(self, host: str, port: int, *,
                 backend_id: str = DEFAULT_BACKEND_ID,
                 label_set: Iterable[str] = COCO_CLASSES,
                 model_loader=load_torchvision_model,
                 reconnect_base: float = 0.5,
                 reconnect_cap: float = 15.0,
                 max_connects: int | None = None):
        self.host = host
        self.port = port
        self.backend_id = backend_id
        self.label_set = list(label_set)
        self.model_loader = model_loader
        self.reconnect_base = reconnect_base
        self.reconnect_cap = reconnect_cap
        self.max_connects = max_connects
        self.registered = asyncio.Event()
        self.last_register_reply: dict | None = None
        self.classifies_handled = 0
        self._model: ModelFn | None = None
        self._req_counter = 0

    # --- lifecycle ---

    async def run(self) -> None:
        """Serve until cancelled (or until max_connects attempts, in tests)."""
        if self._model is None:
            self._model = self.model_loader()
        attempt = 0
        connects = 0
        while self.max_connects is None or connects < self.max_connects:
            connects += 1
            try:
                reader, writer = await asyncio.open_connection(self.host, self.port)
            except OSError as exc:
                logger.warning("connect to %s:%d failed: %s", self.host, self.port, exc)
                await asyncio.sleep(backoff_delay(attempt, self.reconnect_base, self.reconnect_cap))
                attempt += 1
                continue
            try:
                await self._serve(reader, writer)
                attempt = 0  # a served connection resets the schedule
            except (wire.WireError, OSError, asyncio.IncompleteReadError) as exc:
                logger.warning("connection lost: %s", exc)
            finally:
                self.registered.clear()
                writer.close()
                try:
                    await writer.wait_closed()
                except OSError:
                    pass
            await asyncio.sleep(backoff_delay(attempt, self.reconnect_base, self.reconnect_cap))
            attempt += 1

    async def _serve(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        register_id = self._next_id()
        await wire.send_envelope(writer, wire.envelope(register_id, "register_backend", {
            "backend_id": self.backend_id,
            "label_set": self.label_set,
        }))
        while True:
            text = await wire.read_frame(reader)
            if text is None:
                return  # server closed cleanly
            env = wire.parse_envelope(text)
            if wire.is_response(env):
                if env["id"] == register_id:
                    self._on_register_reply(env)
                else:
                    logger.warning("dropping unexpected response id=%r type=%s",
                                   env["id"], env["type"])
                continue
            # strictly sequential: the next frame is read only after this reply
            await wire.send_envelope(writer, self._handle_request(env))

    def _on_register_reply(self, env: dict) -> None:
        if env["type"] == wire.ERROR_TYPE:
            raise wire.WireError(
                f"registration rejected ({env['body'].get('code')}): "
                f"{env['body'].get('message')}")
        self.last_register_reply = env["body"]
        self.registered.set()
        logger.info("registered as %r (replaced=%r)", self.backend_id,
                    env["body"].get("replaced"))

    # --- request handling ---

    def _handle_request(self, env: dict) -> dict:
        if env["type"] != "classify":
            return wire.make_error(env["id"], "unknown_type",
                                   f"worker cannot serve {env['type']!r} requests")
        try:
            image = base64.b64decode(str(env["body"].get("image", "")), validate=True)
        except (binascii.Error, ValueError) as exc:
            return wire.make_error(env["id"], "invalid_image",
                                   f"image is not valid base64: {exc}")
        try:
            detections = run_model(self._model, image)
        except InvalidImageError as exc:
            return wire.make_error(env["id"], "invalid_image", str(exc))
        except Exception as exc:  # noqa: BLE001 - any model fault maps to one code
            logger.exception("model failed")
            return wire.make_error(env["id"], "backend_internal", f"model failure: {exc}")
        self.classifies_handled += 1
        return wire.envelope(env["id"], "classify_result", {"detections": detections})

    def _next_id(self) -> str:
        self._req_counter += 1
        return f"wk-{self._req_counter:04d}"
