"""Worker loop against a scripted bridge server (the engine side, faked)."""

import asyncio
import base64
import contextlib

import pytest

from scenelab_worker import wire
from scenelab_worker.detector import PixelDetection
from scenelab_worker.labels import COCO_CLASSES
from scenelab_worker.worker import DetectionWorker, backoff_delay


def tv_model(image):
    return [PixelDetection("tv", 0.97, (16, 8, 48, 40))]


class BridgeServer:
    """Accepts worker registrations and forwards classify requests."""

    def __init__(self):
        self.registrations: list[dict] = []
        self.reject_next_registration = False
        self.port = 0
        self._server = None
        self._writer = None
        self._registered = asyncio.Event()
        self._pending: dict[str, asyncio.Future] = {}

    async def start(self):
        self._server = await asyncio.start_server(self._on_conn, "127.0.0.1", 0)
        self.port = self._server.sockets[0].getsockname()[1]

    async def stop(self):
        self._server.close()
        await self._server.wait_closed()

    async def _on_conn(self, reader, writer):
        try:
            while True:
                text = await wire.read_frame(reader)
                if text is None:
                    return
                env = wire.parse_envelope(text)
                if env["type"] == "register_backend":
                    self.registrations.append(env)
                    if self.reject_next_registration:
                        self.reject_next_registration = False
                        await wire.send_envelope(writer, wire.make_error(
                            env["id"], "malformed_message", "rejected for the test"))
                        continue
                    replaced = (self.registrations[-2]["body"]["backend_id"]
                                if len(self.registrations) > 1 else None)
                    self._writer = writer
                    await wire.send_envelope(writer, wire.envelope(
                        env["id"], "register_backend_result",
                        {"registered": env["body"]["backend_id"], "replaced": replaced}))
                    self._registered.set()
                elif wire.is_response(env):
                    fut = self._pending.pop(env["id"], None)
                    if fut is not None and not fut.done():
                        fut.set_result(env)
        except (wire.WireError, ConnectionError):
            return

    async def wait_registered(self, timeout=5.0):
        await asyncio.wait_for(self._registered.wait(), timeout)

    async def classify(self, req_id: str, image_b64: str, timeout=5.0) -> dict:
        fut = asyncio.get_running_loop().create_future()
        self._pending[req_id] = fut
        await wire.send_envelope(self._writer, wire.envelope(req_id, "classify",
                                                             {"image": image_b64}))
        return await asyncio.wait_for(fut, timeout)

    async def drop_connection(self):
        self._registered.clear()
        writer, self._writer = self._writer, None
        if writer is not None:
            writer.close()
            with contextlib.suppress(OSError):
                await writer.wait_closed()


@contextlib.asynccontextmanager
async def running_worker(model=tv_model, reject_first=False, **kwargs):
    bridge = BridgeServer()
    await bridge.start()
    bridge.reject_next_registration = reject_first
    worker = DetectionWorker("127.0.0.1", bridge.port, model_loader=lambda: model,
                             reconnect_base=0.01, reconnect_cap=0.05, **kwargs)
    task = asyncio.create_task(worker.run())
    try:
        yield bridge, worker
    finally:
        task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await task
        await bridge.stop()


def test_registers_with_the_coco_label_set():
    async def scenario():
        async with running_worker() as (bridge, worker):
            await bridge.wait_registered()
            env = bridge.registrations[0]
            assert env["type"] == "register_backend"
            assert env["body"]["backend_id"] == "faster-rcnn"
            assert env["body"]["label_set"] == list(COCO_CLASSES)
            assert len(env["body"]["label_set"]) == 80
            await asyncio.wait_for(worker.registered.wait(), 5)
            assert worker.last_register_reply == {"registered": "faster-rcnn",
                                                  "replaced": None}

    asyncio.run(scenario())


def test_classify_returns_normalized_tv_box(png_bytes):
    async def scenario():
        async with running_worker() as (bridge, worker):
            await bridge.wait_registered()
            env = await bridge.classify("srv-0001", base64.b64encode(png_bytes).decode())
            assert env["id"] == "srv-0001"
            assert env["type"] == "classify_result"
            (det,) = env["body"]["detections"]
            assert det["class"] == "tv"
            # 64x64 image, pixel box (16, 8, 48, 40)
            assert det["bbox"] == [0.25, 0.125, 0.75, 0.625]
            assert 0.9 < det["score"] <= 1.0
            assert worker.classifies_handled == 1

    asyncio.run(scenario())


def test_malformed_image_yields_invalid_image():
    async def scenario():
        async with running_worker() as (bridge, worker):
            await bridge.wait_registered()
            garbage = await bridge.classify("srv-0002", base64.b64encode(b"not a png").decode())
            assert garbage["type"] == "error"
            assert garbage["id"] == "srv-0002"
            assert garbage["body"]["code"] == "invalid_image"

            bad_b64 = await bridge.classify("srv-0003", "%%% not base64 %%%")
            assert bad_b64["type"] == "error"
            assert bad_b64["body"]["code"] == "invalid_image"
            assert worker.classifies_handled == 0

    asyncio.run(scenario())


def test_model_failure_yields_backend_internal(png_bytes):
    def broken(image):
        raise RuntimeError("weights corrupted")

    async def scenario():
        async with running_worker(model=broken) as (bridge, worker):
            await bridge.wait_registered()
            env = await bridge.classify("srv-0004", base64.b64encode(png_bytes).decode())
            assert env["type"] == "error"
            assert env["body"]["code"] == "backend_internal"
            # the connection survives a model fault
            ok = await bridge.classify("srv-0005", base64.b64encode(b"junk").decode())
            assert ok["body"]["code"] == "invalid_image"

    asyncio.run(scenario())


def test_requests_are_answered_in_arrival_order(png_bytes):
    calls = []

    def recording(image):
        calls.append(len(calls))
        return [PixelDetection("cup", 0.8, (1, 1, 10, 10))]

    async def scenario():
        async with running_worker(model=recording) as (bridge, worker):
            await bridge.wait_registered()
            image = base64.b64encode(png_bytes).decode()
            # both frames hit the socket before either reply is awaited;
            # the worker reads and answers strictly one at a time
            first, second = await asyncio.gather(
                bridge.classify("srv-a", image), bridge.classify("srv-b", image))
            assert (first["id"], second["id"]) == ("srv-a", "srv-b")
            assert calls == [0, 1]
            assert worker.classifies_handled == 2

    asyncio.run(scenario())


def test_reconnects_and_reregisters_after_drop(png_bytes):
    async def scenario():
        async with running_worker() as (bridge, worker):
            await bridge.wait_registered()
            await bridge.drop_connection()
            await bridge.wait_registered()  # a fresh registration arrived
            assert len(bridge.registrations) == 2
            assert bridge.registrations[1]["body"]["backend_id"] == "faster-rcnn"
            env = await bridge.classify("srv-0006", base64.b64encode(png_bytes).decode())
            assert env["type"] == "classify_result"

    asyncio.run(scenario())


def test_rejected_registration_is_retried():
    async def scenario():
        async with running_worker(reject_first=True) as (bridge, worker):
            await bridge.wait_registered()
            assert len(bridge.registrations) >= 2
            await asyncio.wait_for(worker.registered.wait(), 5)

    asyncio.run(scenario())


def test_backoff_schedule_doubles_to_cap():
    assert [backoff_delay(i) for i in range(7)] == [0.5, 1.0, 2.0, 4.0, 8.0, 15.0, 15.0]
    assert [backoff_delay(i, base=1.0, cap=4.0) for i in range(4)] == [1.0, 2.0, 4.0, 4.0]
    assert backoff_delay(-3) == 0.5
