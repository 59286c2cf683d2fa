"""Client-side implementation of the server's wire protocol.

Frames are a 4-byte big-endian length prefix followed by that many bytes of
UTF-8 JSON. Every message is an envelope {"v": 1, "id": ..., "type": ...,
"body": {...}}; responses echo the request id, error envelopes carry
body.code / body.message.
"""

from __future__ import annotations

import asyncio
import json

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 16 * 1024 * 1024
MIN_FRAME_BYTES = 2
DEFAULT_TCP_PORT = 7047

ERROR_TYPE = "error"


class WireError(Exception):
    """Framing or envelope violation; the connection is not usable after it."""


def encode_frame(payload: str) -> bytes:
    data = payload.encode("utf-8")
    if not MIN_FRAME_BYTES <= len(data) <= MAX_FRAME_BYTES:
        raise WireError(f"frame payload of {len(data)} bytes is outside the protocol bounds")
    return len(data).to_bytes(4, "big") + data


async def read_frame(reader: asyncio.StreamReader) -> str | None:
    """One frame payload, or None on clean end-of-stream at a boundary."""
    try:
        header = await reader.readexactly(4)
    except asyncio.IncompleteReadError as exc:
        if not exc.partial:
            return None
        raise WireError("stream ended inside a frame header") from exc
    length = int.from_bytes(header, "big")
    if length > MAX_FRAME_BYTES:
        raise WireError(f"declared frame length {length} exceeds cap {MAX_FRAME_BYTES}")
    if length < MIN_FRAME_BYTES:
        raise WireError(f"declared frame length {length} below minimum {MIN_FRAME_BYTES}")
    try:
        data = await reader.readexactly(length)
    except asyncio.IncompleteReadError as exc:
        raise WireError("stream ended inside a frame body") from exc
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireError(f"frame payload is not valid UTF-8: {exc}") from exc


def envelope(env_id: str, env_type: str, body: dict) -> dict:
    return {"v": PROTOCOL_VERSION, "id": env_id, "type": env_type, "body": body}


def make_error(env_id: str, code: str, message: str) -> dict:
    return envelope(env_id, ERROR_TYPE, {"code": code, "message": message})


def parse_envelope(text: str) -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WireError(f"envelope is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise WireError("envelope must be a JSON object")
    if raw.get("v") != PROTOCOL_VERSION:
        raise WireError(f"unsupported protocol version {raw.get('v')!r}")
    env_id = raw.get("id")
    env_type = raw.get("type")
    body = raw.get("body")
    if not isinstance(env_id, str):
        raise WireError("envelope 'id' must be a string")
    if not isinstance(env_type, str) or not env_type:
        raise WireError("envelope 'type' must be a non-empty string")
    if not env_id and env_type != ERROR_TYPE:
        raise WireError("envelope 'id' may only be empty on errors")
    if not isinstance(body, dict):
        raise WireError("envelope 'body' must be an object")
    return {"v": PROTOCOL_VERSION, "id": env_id, "type": env_type, "body": body}


async def send_envelope(writer: asyncio.StreamWriter, env: dict) -> None:
    writer.write(encode_frame(json.dumps(env, separators=(",", ":"))))
    await writer.drain()


def is_response(env: dict) -> bool:
    """Responses end in _result; error envelopes count as responses too."""
    return env["type"] == ERROR_TYPE or env["type"].endswith("_result")
