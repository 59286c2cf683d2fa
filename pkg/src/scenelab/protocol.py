"""Wire protocol between clients and the server.

Framing (TCP): ``[len: u32 big-endian][payload: len bytes UTF-8]``, with the
payload a single JSON envelope. Over the WebSocket bridge the identical
envelope travels as one text message per envelope, no length prefix.

Envelopes: ``{"v": 1, "id": <correlation string>, "type": <type>, "body": {}}``.
Every request type has exactly one success response (``<type>_result``) plus
the shared ``error`` response carrying ``code`` and ``message``. Clients may
pipeline; the server replies in completion order, matched by id.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import BinaryIO

from .errors import (
    FrameTooLarge,
    FrameTooSmall,
    InvalidUtf8,
    MalformedMessage,
    ProtocolError,
    Truncated,
    UnknownType,
    UnsupportedVersion,
)

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 16 * 1024 * 1024
MIN_FRAME_BYTES = 2
DEFAULT_TCP_PORT = 7047
DEFAULT_WS_PORT = 7048
WS_PATH = "/ws"

# request type -> required body fields
REQUEST_TYPES: dict[str, tuple[str, ...]] = {
    "ping": (),
    "classify": ("image",),
    "log_write": ("action", "payload"),
    "log_query": (),
    "save_config": ("name",),
    "load_config": ("name",),
    "list_scenes": (),
    "get_asset": ("path",),
    "measure": ("a", "b"),
    "set_transform": ("object_id", "transform"),
    "restore_original": ("object_id",),
    # examination session flow
    "open_scene": ("scene_id",),
    "select": ("object_id", "indices"),
    "expand": (),
    "shrink": (),
    "grab": ("object_id",),
    "release": ("object_id",),
    "label": ("object_id", "label"),
    # detection worker handshake
    "register_backend": ("backend_id", "label_set"),
}

ERROR_TYPE = "error"


def response_type(request_type: str) -> str:
    """The unique success-response type for a request type."""
    if request_type not in REQUEST_TYPES:
        raise UnknownType(f"unknown request type {request_type!r}", type_name=request_type)
    return request_type + "_result"


RESPONSE_TYPES = frozenset(t + "_result" for t in REQUEST_TYPES) | {ERROR_TYPE}
ALL_TYPES = frozenset(REQUEST_TYPES) | RESPONSE_TYPES


@dataclass
class MessageEnvelope:
    """One protocol message: version, correlation id, type and payload."""

    id: str
    type: str
    body: dict = field(default_factory=dict)
    v: int = PROTOCOL_VERSION

    def is_request(self) -> bool:
        return self.type in REQUEST_TYPES

    def is_error(self) -> bool:
        return self.type == ERROR_TYPE


def new_request_id() -> str:
    return os.urandom(8).hex()


def make_request(req_type: str, body: dict | None = None, req_id: str | None = None) -> MessageEnvelope:
    return MessageEnvelope(id=req_id or new_request_id(), type=req_type, body=body or {})


def make_response(request: MessageEnvelope, body: dict | None = None) -> MessageEnvelope:
    return MessageEnvelope(id=request.id, type=response_type(request.type), body=body or {})


def make_error(request_id: str, code: str, message: str) -> MessageEnvelope:
    return MessageEnvelope(id=request_id, type=ERROR_TYPE, body={"code": code, "message": message})


def serialize_envelope(env: MessageEnvelope) -> str:
    return json.dumps(
        {"v": env.v, "id": env.id, "type": env.type, "body": env.body},
        ensure_ascii=False,
        separators=(",", ":"),
        allow_nan=False,
    )


def parse_envelope(payload: str) -> MessageEnvelope:
    """Parse one decoded frame payload into a typed envelope.

    Unknown types are rejected but preserved on the exception so the server
    can name them in its error response.
    """
    try:
        raw = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise MalformedMessage(f"envelope is not valid JSON: {exc.msg} (offset {exc.pos})") from exc
    if not isinstance(raw, dict):
        raise MalformedMessage(f"envelope must be a JSON object, got {type(raw).__name__}")
    version = raw.get("v")
    if version != PROTOCOL_VERSION:
        raise UnsupportedVersion(f"protocol version {version!r} not supported (need {PROTOCOL_VERSION})")
    env_id = raw.get("id")
    if not isinstance(env_id, str):
        raise MalformedMessage("envelope field 'id' must be a string")
    env_type = raw.get("type")
    if not isinstance(env_type, str):
        raise MalformedMessage("envelope field 'type' must be a string")
    # an error for an unparseable request is legitimately un-correlatable,
    # so only requests insist on a non-empty id
    if not env_id and env_type != ERROR_TYPE:
        raise MalformedMessage("envelope field 'id' must be non-empty")
    body = raw.get("body")
    if not isinstance(body, dict):
        raise MalformedMessage("envelope field 'body' must be an object")
    if env_type not in ALL_TYPES:
        raise UnknownType(f"unknown envelope type {env_type!r}", type_name=env_type)
    if env_type in REQUEST_TYPES:
        for required in REQUEST_TYPES[env_type]:
            if required not in body:
                raise MalformedMessage(f"{env_type} body is missing required field {required!r}")
    if env_type == ERROR_TYPE:
        for required in ("code", "message"):
            if required not in body:
                raise MalformedMessage(f"error body is missing required field {required!r}")
    return MessageEnvelope(id=env_id, type=env_type, body=body, v=version)


# --- framing --------------------------------------------------------------------

def encode_frame(payload: str) -> bytes:
    """Length-prefix a payload: 4-byte big-endian size, then UTF-8 bytes."""
    data = payload.encode("utf-8")
    if len(data) < MIN_FRAME_BYTES:
        raise FrameTooSmall(f"frame payload is {len(data)} bytes (minimum {MIN_FRAME_BYTES})")
    if len(data) > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"frame payload is {len(data)} bytes (cap {MAX_FRAME_BYTES})")
    return len(data).to_bytes(4, "big") + data


class FrameDecoder:
    """Incremental frame decoder; tolerant of arbitrary stream chunking.

    Feed raw bytes as they arrive; complete payloads come back in order.
    Framing violations (oversized or undersized declared length, invalid
    UTF-8) poison the decoder: the connection must be closed.
    """

    def __init__(self):
        self._buf = bytearray()
        self._pos = 0
        self._need: int | None = None
        self._dead = False

    def feed(self, data: bytes) -> list[str]:
        if self._dead:
            raise ProtocolError("decoder is unusable after a framing error")
        self._buf += data
        out: list[str] = []
        while True:
            avail = len(self._buf) - self._pos
            if self._need is None:
                if avail < 4:
                    break
                length = int.from_bytes(self._buf[self._pos:self._pos + 4], "big")
                if length > MAX_FRAME_BYTES:
                    self._dead = True
                    raise FrameTooLarge(f"declared frame length {length} exceeds cap {MAX_FRAME_BYTES}")
                if length < MIN_FRAME_BYTES:
                    self._dead = True
                    raise FrameTooSmall(f"declared frame length {length} below minimum {MIN_FRAME_BYTES}")
                self._pos += 4
                self._need = length
            else:
                if avail < self._need:
                    break
                payload = bytes(self._buf[self._pos:self._pos + self._need])
                self._pos += self._need
                self._need = None
                try:
                    out.append(payload.decode("utf-8"))
                except UnicodeDecodeError as exc:
                    self._dead = True
                    raise InvalidUtf8(f"frame payload is not valid UTF-8: {exc}") from exc
        if self._pos > 65536 and self._pos * 2 > len(self._buf):
            del self._buf[:self._pos]
            self._pos = 0
        return out

    @property
    def mid_frame(self) -> bool:
        return self._need is not None or len(self._buf) - self._pos > 0

    def finish(self) -> None:
        """Signal end of stream; raises if it ended inside a frame."""
        if self.mid_frame:
            raise Truncated("stream ended mid-frame")


def decode_frame(stream: BinaryIO) -> str | None:
    """Read exactly one frame from a blocking byte stream.

    Returns the payload text, or None on clean end-of-stream at a frame
    boundary. Raises Truncated if the stream ends inside a frame.
    """
    header = _read_exact(stream, 4)
    if header is None:
        return None
    if len(header) < 4:
        raise Truncated("stream ended inside frame header")
    length = int.from_bytes(header, "big")
    if length > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"declared frame length {length} exceeds cap {MAX_FRAME_BYTES}")
    if length < MIN_FRAME_BYTES:
        raise FrameTooSmall(f"declared frame length {length} below minimum {MIN_FRAME_BYTES}")
    payload = _read_exact(stream, length)
    if payload is None or len(payload) < length:
        raise Truncated("stream ended inside frame payload")
    try:
        return payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidUtf8(f"frame payload is not valid UTF-8: {exc}") from exc


def _read_exact(stream: BinaryIO, n: int) -> bytes | None:
    chunks = bytearray()
    while len(chunks) < n:
        chunk = stream.read(n - len(chunks))
        if not chunk:
            return bytes(chunks) if chunks else None
        chunks += chunk
    return bytes(chunks)
