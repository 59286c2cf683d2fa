"""Network service: protocol endpoint, WebSocket bridge, assets, dispatch.

One process listens on two ports: raw length-prefixed TCP (default 7047)
and an aiohttp WebSocket bridge at ``/ws`` (default 7048) carrying the
identical envelopes as text messages. Browsers use the bridge; native
clients and detection workers use TCP.

Each connection owns one session; scene state lives server-side and every
state-changing request is appended to the examination log before the
response goes out. A detection worker is an ordinary connection that sent
``register_backend``: the server then forwards ``classify`` envelopes to
it and correlates the replies.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import json
import logging
import mimetypes
import os
import signal
import socket
import time
from dataclasses import dataclass, field
from pathlib import Path

from aiohttp import WSMsgType, web

from .assets import AssetCatalog
from .detection import (
    DEFAULT_MIN_SCORE,
    DetectionBackendInfo,
    StubBackend,
    detect,
    image_hash,
    postprocess_detections,
)
from .errors import (
    BackendProtocolError,
    BackendUnavailable,
    BindError,
    DetectionTimeout,
    EmptySelection,
    InvalidImage,
    MalformedMessage,
    NoSession,
    ProtocolError,
    SceneLabError,
    UnknownScene,
)
from .geometry import Transform, Vec3, measure_distance
from .logbook import (
    ConfigStore,
    LogStore,
    Measurement,
    apply_configuration,
    configuration_from_scene,
    now_ms,
)
from .protocol import (
    DEFAULT_TCP_PORT,
    DEFAULT_WS_PORT,
    MAX_FRAME_BYTES,
    RESPONSE_TYPES,
    REQUEST_TYPES,
    WS_PATH,
    FrameDecoder,
    MessageEnvelope,
    encode_frame,
    make_error,
    make_response,
    new_request_id,
    parse_envelope,
    serialize_envelope,
)
from .scene import Scene
from .scene import restore_original as restore_object
from .scene import set_label as label_object
from .scene import set_transform as transform_object
from .selection import VertexSelection, check_selection, expand_selection, shrink_selection
from .snapshot import decode_png

logger = logging.getLogger(__name__)


@dataclass
class ServerConfig:
    asset_root: str | Path
    log_path: str | Path
    host: str = "127.0.0.1"
    tcp_port: int = DEFAULT_TCP_PORT
    ws_port: int = DEFAULT_WS_PORT
    config_dir: str | Path | None = None  # default: <log dir>/configs
    stub_manifest: str | Path | None = None
    static_root: str | Path | None = None
    durable_log: bool = True
    classify_timeout: float = 60.0
    shutdown_grace: float = 15.0

    @staticmethod
    def from_env(asset_root: str | Path | None = None,
                 log_path: str | Path | None = None, **overrides) -> "ServerConfig":
        env = os.environ
        return ServerConfig(
            asset_root=asset_root or env.get("SCENELAB_ASSETS", "assets"),
            log_path=log_path or env.get("SCENELAB_LOG", "scenelab-log.jsonl"),
            tcp_port=int(overrides.pop("tcp_port", env.get("SCENELAB_PORT", DEFAULT_TCP_PORT))),
            ws_port=int(overrides.pop("ws_port", env.get("SCENELAB_WS_PORT", DEFAULT_WS_PORT))),
            **overrides,
        )


@dataclass
class Session:
    session_id: str
    scene: Scene | None = None
    selection: VertexSelection | None = None
    measurements: list[Measurement] = field(default_factory=list)
    grabbed: set[str] = field(default_factory=set)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    created_at: int = field(default_factory=now_ms)

    @staticmethod
    def new() -> "Session":
        return Session(session_id="s-" + os.urandom(6).hex())


class Connection:
    """One client transport (TCP stream or WebSocket) and its session."""

    def __init__(self, writer: asyncio.StreamWriter | None = None,
                 ws: web.WebSocketResponse | None = None):
        self.session = Session.new()
        self.pending: dict[str, asyncio.Future] = {}  # server->worker correlation
        self.is_worker = False
        self.closed = False
        self._writer = writer
        self._ws = ws
        self._send_lock = asyncio.Lock()

    async def send(self, env: MessageEnvelope) -> None:
        text = serialize_envelope(env)
        async with self._send_lock:
            if self.closed:
                raise ConnectionError("connection already closed")
            if self._writer is not None:
                self._writer.write(encode_frame(text))
                await self._writer.drain()
            else:
                await self._ws.send_str(text)

    async def send_safe(self, env: MessageEnvelope) -> None:
        try:
            await self.send(env)
        except (ConnectionError, RuntimeError, OSError):
            pass

    async def close_transport(self) -> None:
        self.closed = True
        try:
            if self._writer is not None:
                self._writer.close()
                await self._writer.wait_closed()
            elif self._ws is not None and not self._ws.closed:
                await self._ws.close()
        except (ConnectionError, RuntimeError, OSError):
            pass


class RemoteBackend:
    """A registered detection worker, addressed over its own connection.

    Requests are serialized: one classify in flight at a time, in arrival
    order, matching the single-worker processing model.
    """

    def __init__(self, conn: Connection, backend_id: str, label_set):
        self.conn = conn
        self._info = DetectionBackendInfo(
            backend_id=backend_id, label_set=tuple(label_set), remote=True)
        self._lock = asyncio.Lock()

    def info(self) -> DetectionBackendInfo:
        return self._info

    async def classify(self, image_b64: str, timeout: float) -> list:
        async with self._lock:
            req = MessageEnvelope(id=new_request_id(), type="classify",
                                  body={"image": image_b64})
            fut: asyncio.Future = asyncio.get_running_loop().create_future()
            self.conn.pending[req.id] = fut
            try:
                await self.conn.send(req)
                resp: MessageEnvelope = await asyncio.wait_for(fut, timeout)
            except asyncio.TimeoutError:
                raise DetectionTimeout(
                    f"backend {self._info.backend_id!r} gave no answer within {timeout:.0f}s"
                ) from None
            except (ConnectionError, OSError) as exc:
                raise BackendUnavailable(f"backend connection lost: {exc}") from exc
            finally:
                self.conn.pending.pop(req.id, None)
        if resp.is_error():
            code = resp.body.get("code", "backend_protocol")
            message = resp.body.get("message", "backend error")
            if code == "invalid_image":
                raise InvalidImage(message)
            raise BackendProtocolError(f"backend failed ({code}): {message}")
        dets = resp.body.get("detections")
        if not isinstance(dets, list):
            raise BackendProtocolError("backend result carries no detections list")
        return dets


def _best_effort_id(text: str) -> str:
    try:
        obj = json.loads(text)
    except ValueError:
        return ""
    rid = obj.get("id") if isinstance(obj, dict) else None
    return rid if isinstance(rid, str) else ""


class SceneLabServer:
    """The running service: owns stores, catalog, connections and dispatch."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.catalog = AssetCatalog(config.asset_root)
        self.log = LogStore(config.log_path, durable=config.durable_log)
        config_dir = config.config_dir or Path(config.log_path).parent / "configs"
        self.configs = ConfigStore(config_dir)
        self._stub: StubBackend | None = None
        if config.stub_manifest:
            self._stub = StubBackend.from_file(config.stub_manifest)
        self._remote: RemoteBackend | None = None
        self._conns: set[Connection] = set()
        self._req_tasks: set[asyncio.Task] = set()
        self._tcp_server: asyncio.base_events.Server | None = None
        self._runner: web.AppRunner | None = None
        self.tcp_port = config.tcp_port
        self.ws_port = config.ws_port
        self._handlers = {
            "ping": self._op_ping,
            "open_scene": self._op_open_scene,
            "select": self._op_select,
            "expand": self._op_expand,
            "shrink": self._op_shrink,
            "grab": self._op_grab,
            "release": self._op_release,
            "label": self._op_label,
            "set_transform": self._op_set_transform,
            "restore_original": self._op_restore_original,
            "measure": self._op_measure,
            "classify": self._op_classify,
            "save_config": self._op_save_config,
            "load_config": self._op_load_config,
            "log_write": self._op_log_write,
            "log_query": self._op_log_query,
            "list_scenes": self._op_list_scenes,
            "get_asset": self._op_get_asset,
            "register_backend": self._op_register_backend,
        }
        missing = set(REQUEST_TYPES) - set(self._handlers)
        if missing:
            raise RuntimeError(f"request types without handlers: {sorted(missing)}")

    # --- lifecycle ---

    async def start(self) -> None:
        host = self.config.host
        try:
            self._tcp_server = await asyncio.start_server(
                self._tcp_connection, host, self.config.tcp_port)
        except OSError as exc:
            self.log.close()
            raise BindError(f"cannot bind tcp {host}:{self.config.tcp_port}: {exc}") from exc
        self.tcp_port = self._tcp_server.sockets[0].getsockname()[1]

        app = web.Application()
        app.router.add_get(WS_PATH, self._ws_handler)
        if self.config.static_root:
            app.router.add_get("/", self._static_index)
            app.router.add_get("/{tail:.+}", self._static_file)
        self._runner = web.AppRunner(app)
        await self._runner.setup()
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((host, self.config.ws_port))
        except OSError as exc:
            sock.close()
            await self._runner.cleanup()
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
            self.log.close()
            raise BindError(f"cannot bind ws {host}:{self.config.ws_port}: {exc}") from exc
        self.ws_port = sock.getsockname()[1]
        await web.SockSite(self._runner, sock).start()
        logger.info("listening: tcp %s:%d, ws %s:%d%s",
                    host, self.tcp_port, host, self.ws_port, WS_PATH)

    async def stop(self) -> None:
        """Graceful shutdown: finish in-flight requests, then close everything."""
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._req_tasks:
            done, pending = await asyncio.wait(
                set(self._req_tasks), timeout=self.config.shutdown_grace)
            for task in pending:
                task.cancel()
        for conn in list(self._conns):
            await self._drop_connection(conn)
        if self._runner is not None:
            await self._runner.cleanup()
        self.log.close()

    # --- transports ---

    async def _tcp_connection(self, reader: asyncio.StreamReader,
                              writer: asyncio.StreamWriter) -> None:
        conn = Connection(writer=writer)
        self._conns.add(conn)
        decoder = FrameDecoder()
        try:
            while True:
                chunk = await reader.read(65536)
                if not chunk:
                    break
                try:
                    payloads = decoder.feed(chunk)
                except ProtocolError as exc:
                    await conn.send_safe(make_error("", exc.code, str(exc)))
                    break  # framing violations poison the stream
                for text in payloads:
                    self._route_text(conn, text)
        except (ConnectionResetError, BrokenPipeError, asyncio.IncompleteReadError):
            pass
        finally:
            await self._drop_connection(conn)

    async def _ws_handler(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse(max_msg_size=MAX_FRAME_BYTES)
        await ws.prepare(request)
        conn = Connection(ws=ws)
        self._conns.add(conn)
        try:
            async for msg in ws:
                if msg.type == WSMsgType.TEXT:
                    self._route_text(conn, msg.data)
                elif msg.type == WSMsgType.BINARY:
                    await conn.send_safe(make_error(
                        "", "malformed_message", "the bridge carries text envelopes only"))
                elif msg.type == WSMsgType.ERROR:
                    break
        finally:
            await self._drop_connection(conn)
        return ws

    def _route_text(self, conn: Connection, text: str) -> None:
        try:
            env = parse_envelope(text)
        except ProtocolError as exc:
            err = make_error(_best_effort_id(text), exc.code, str(exc))
            self._spawn(conn.send_safe(err))
            return
        if env.type in RESPONSE_TYPES:
            fut = conn.pending.get(env.id)
            if fut is not None and not fut.done():
                fut.set_result(env)
            else:
                logger.warning("dropping unmatched response id=%r type=%s", env.id, env.type)
            return
        self._spawn(self._handle_request(conn, env))

    def _spawn(self, coro) -> None:
        task = asyncio.ensure_future(coro)
        self._req_tasks.add(task)
        task.add_done_callback(self._req_tasks.discard)

    async def _handle_request(self, conn: Connection, env: MessageEnvelope) -> None:
        response = await self._dispatch(conn, env)
        await conn.send_safe(response)

    async def _drop_connection(self, conn: Connection) -> None:
        self._conns.discard(conn)
        for fut in conn.pending.values():
            if not fut.done():
                fut.set_exception(BackendUnavailable("backend disconnected"))
        conn.pending.clear()
        if self._remote is not None and self._remote.conn is conn:
            logger.info("detection backend %r disconnected", self._remote.info().backend_id)
            self._remote = None
        await conn.close_transport()

    # --- static files for the browser viewer ---

    async def _static_index(self, request: web.Request) -> web.FileResponse:
        index = Path(self.config.static_root) / "index.html"
        if not index.is_file():
            raise web.HTTPNotFound()
        return web.FileResponse(index)

    async def _static_file(self, request: web.Request) -> web.FileResponse:
        root = Path(self.config.static_root).resolve()
        tail = request.match_info["tail"]
        if any(p in ("..", ".") for p in Path(tail).parts):
            raise web.HTTPForbidden()
        target = (root / tail).resolve()
        if root not in target.parents or not target.is_file():
            raise web.HTTPNotFound()
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        return web.FileResponse(target, headers={"Content-Type": ctype})

    # --- dispatch ---

    async def _dispatch(self, conn: Connection, env: MessageEnvelope) -> MessageEnvelope:
        handler = self._handlers[env.type]
        try:
            body = await handler(conn, env.body)
            return make_response(env, body)
        except SceneLabError as exc:
            return make_error(env.id, exc.code, str(exc))
        except (TypeError, ValueError, KeyError) as exc:
            return make_error(env.id, "malformed_message", f"bad request body: {exc}")
        except Exception:
            logger.exception("unhandled error in %s", env.type)
            return make_error(env.id, "internal", "internal server error")

    def _require_scene(self, session: Session) -> Scene:
        if session.scene is None:
            raise NoSession("open a scene before this request")
        return session.scene

    def _current_backend(self):
        return self._remote if self._remote is not None else self._stub

    # --- handlers ---

    async def _op_ping(self, conn: Connection, body: dict) -> dict:
        return {"session_id": conn.session.session_id, "time_ms": now_ms()}

    async def _op_open_scene(self, conn: Connection, body: dict) -> dict:
        scene = self.catalog.open_scene(str(body["scene_id"]))
        session = conn.session
        async with session.lock:
            session.scene = scene
            session.selection = None
            session.measurements = []
            session.grabbed = set()
            self.log.append(session.session_id, "scene_open", {"scene_id": scene.scene_id})
        return {"session_id": session.session_id, "scene": scene.summary()}

    async def _op_select(self, conn: Connection, body: dict) -> dict:
        session = conn.session
        scene = self._require_scene(session)
        object_id = str(body["object_id"])
        raw = body["indices"]
        if not isinstance(raw, list):
            raise MalformedMessage("indices must be a list of vertex indices")
        obj = scene.get(object_id)
        sel = VertexSelection(object_id, tuple(int(i) for i in raw))
        check_selection(obj.mesh, sel)
        async with session.lock:
            session.selection = sel
            self.log.append(session.session_id, "select",
                            {"object_id": object_id, "indices": list(sel.indices)})
        return {"object_id": object_id, "indices": list(sel.indices), "count": len(sel)}

    async def _op_expand(self, conn: Connection, body: dict) -> dict:
        return await self._resize_selection(conn, expand_selection, "expand")

    async def _op_shrink(self, conn: Connection, body: dict) -> dict:
        return await self._resize_selection(conn, shrink_selection, "shrink")

    async def _resize_selection(self, conn: Connection, op, action: str) -> dict:
        session = conn.session
        scene = self._require_scene(session)
        if session.selection is None:
            raise EmptySelection(f"no active selection to {action}")
        mesh = scene.get(session.selection.object_id).mesh
        sel = op(mesh, session.selection)
        async with session.lock:
            session.selection = sel
            self.log.append(session.session_id, action,
                            {"object_id": sel.object_id, "count": len(sel)})
        return {"object_id": sel.object_id, "indices": list(sel.indices), "count": len(sel)}

    async def _op_grab(self, conn: Connection, body: dict) -> dict:
        session = conn.session
        scene = self._require_scene(session)
        object_id = str(body["object_id"])
        scene.get(object_id)
        async with session.lock:
            session.grabbed.add(object_id)
            self.log.append(session.session_id, "grab", {"object_id": object_id})
        return {"object_id": object_id}

    async def _op_release(self, conn: Connection, body: dict) -> dict:
        session = conn.session
        scene = self._require_scene(session)
        object_id = str(body["object_id"])
        scene.get(object_id)
        async with session.lock:
            session.grabbed.discard(object_id)
            self.log.append(session.session_id, "release", {"object_id": object_id})
        return {"object_id": object_id}

    async def _op_label(self, conn: Connection, body: dict) -> dict:
        session = conn.session
        scene = self._require_scene(session)
        event = label_object(scene, str(body["object_id"]), str(body["label"]))
        if "score" in body:
            event["score"] = float(body["score"])
        async with session.lock:
            self.log.append(session.session_id, "label", event)
        return event

    async def _op_set_transform(self, conn: Connection, body: dict) -> dict:
        session = conn.session
        scene = self._require_scene(session)
        transform = Transform.from_dict(body["transform"])
        async with session.lock:
            event = transform_object(scene, str(body["object_id"]), transform)
            self.log.append(session.session_id, "move", event)
        return event

    async def _op_restore_original(self, conn: Connection, body: dict) -> dict:
        session = conn.session
        scene = self._require_scene(session)
        async with session.lock:
            event = restore_object(scene, str(body["object_id"]))
            self.log.append(session.session_id, "restore", event)
        return event

    async def _op_measure(self, conn: Connection, body: dict) -> dict:
        a = Vec3.from_any(body["a"])
        b = Vec3.from_any(body["b"])
        m = Measurement(a, b, measure_distance(a, b))
        session = conn.session
        async with session.lock:
            session.measurements.append(m)
            self.log.append(session.session_id, "measure", m.to_dict())
        return {"distance": m.distance}

    async def _op_classify(self, conn: Connection, body: dict) -> dict:
        session = conn.session
        scene = self._require_scene(session)
        object_id = body.get("object_id")
        if object_id is not None:
            scene.get(str(object_id))
        try:
            image = base64.b64decode(body["image"], validate=True)
        except (binascii.Error, TypeError) as exc:
            raise InvalidImage(f"image is not valid base64: {exc}") from exc
        min_score = float(body.get("min_score", DEFAULT_MIN_SCORE))
        request_payload = {"object_id": object_id, "sha256": image_hash(image),
                           "bytes": len(image)}
        if "vertex_count" in body:
            request_payload["vertex_count"] = int(body["vertex_count"])
        self.log.append(session.session_id, "classify_request", request_payload)
        backend = self._current_backend()
        if backend is None:
            raise BackendUnavailable("no detection backend registered")
        start = time.perf_counter()
        if isinstance(backend, RemoteBackend):
            decode_png(image)  # reject garbage before it crosses the wire
            raw = await backend.classify(body["image"], self.config.classify_timeout)
            detections = postprocess_detections(raw, min_score)
            backend_id = backend.info().backend_id
        else:
            outcome = detect(backend, image, min_score)
            detections = list(outcome.detections)
            backend_id = outcome.backend_id
        latency_ms = int((time.perf_counter() - start) * 1000.0)
        det_dicts = [d.to_dict() for d in detections]
        self.log.append(session.session_id, "classify_result",
                        {"backend_id": backend_id, "latency_ms": latency_ms,
                         "detections": det_dicts})
        return {"detections": det_dicts, "backend_id": backend_id, "latency_ms": latency_ms}

    async def _op_save_config(self, conn: Connection, body: dict) -> dict:
        session = conn.session
        scene = self._require_scene(session)
        name = str(body["name"])
        async with session.lock:
            config = configuration_from_scene(scene, session.measurements, name=name)
            self.configs.save(config, overwrite=bool(body.get("overwrite", False)))
            self.log.append(session.session_id, "save_config", {"name": name})
        return {"config": config.to_dict()}

    async def _op_load_config(self, conn: Connection, body: dict) -> dict:
        session = conn.session
        scene = self._require_scene(session)
        config = self.configs.load(str(body["name"]))
        if config.scene_id != scene.scene_id:
            raise UnknownScene(
                f"configuration {config.name!r} belongs to scene {config.scene_id!r}, "
                f"session has {scene.scene_id!r}")
        async with session.lock:
            apply_configuration(scene, config)
            session.measurements = list(config.measurements)
            self.log.append(session.session_id, "load_config",
                            {"name": config.name, "config": config.to_dict()})
        return {"config": config.to_dict()}

    async def _op_log_write(self, conn: Connection, body: dict) -> dict:
        payload = body["payload"]
        if not isinstance(payload, dict):
            raise MalformedMessage("payload must be an object")
        entry = self.log.append(conn.session.session_id, str(body["action"]), payload)
        return {"entry": entry.to_dict()}

    async def _op_log_query(self, conn: Connection, body: dict) -> dict:
        entries = self.log.query(
            session_id=body.get("session_id"),
            action=body.get("action"),
            seq_min=body.get("seq_min"),
            seq_max=body.get("seq_max"),
        )
        return {"entries": [e.to_dict() for e in entries]}

    async def _op_list_scenes(self, conn: Connection, body: dict) -> dict:
        return {"scenes": self.catalog.list_scenes()}

    async def _op_get_asset(self, conn: Connection, body: dict) -> dict:
        relpath = str(body["path"])
        data = self.catalog.read_asset(relpath)
        return {"path": relpath, "size": len(data),
                "data": base64.b64encode(data).decode("ascii")}

    async def _op_register_backend(self, conn: Connection, body: dict) -> dict:
        backend_id = str(body["backend_id"])
        label_set = body["label_set"]
        if (not isinstance(label_set, list) or not label_set
                or not all(isinstance(c, str) and c for c in label_set)):
            raise MalformedMessage("label_set must be a non-empty list of class names")
        previous = self._remote.info().backend_id if self._remote else None
        conn.is_worker = True
        self._remote = RemoteBackend(conn, backend_id, label_set)
        logger.info("detection backend %r registered (%d classes)", backend_id, len(label_set))
        return {"registered": backend_id, "replaced": previous}


def run_server(config: ServerConfig) -> None:
    """Blocking entry point: serve until SIGTERM/SIGINT, then drain and exit."""
    asyncio.run(_serve_until_signal(config))


async def _serve_until_signal(config: ServerConfig) -> None:
    server = SceneLabServer(config)
    await server.start()
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGTERM, signal.SIGINT):
        loop.add_signal_handler(sig, stop.set)
    print(f"scenelab server ready: tcp={config.host}:{server.tcp_port} "
          f"ws={config.host}:{server.ws_port}{WS_PATH}", flush=True)
    try:
        await stop.wait()
    finally:
        for sig in (signal.SIGTERM, signal.SIGINT):
            loop.remove_signal_handler(sig)
        await server.stop()
