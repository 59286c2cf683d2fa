"""Minimal asyncio protocol client, used by the tests and for scripting.

Supports both call styles the wire allows: strict request/response via
``request()``, and explicit pipelining via ``send()`` + ``recv()``.
"""

from __future__ import annotations

import asyncio

from .protocol import (
    DEFAULT_TCP_PORT,
    FrameDecoder,
    MessageEnvelope,
    encode_frame,
    make_request,
    parse_envelope,
    serialize_envelope,
)


class SceneLabClient:
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._reader = reader
        self._writer = writer
        self._decoder = FrameDecoder()
        self._queue: list[MessageEnvelope] = []
        self._stray: dict[str, MessageEnvelope] = {}

    @classmethod
    async def connect(cls, host: str = "127.0.0.1",
                      port: int = DEFAULT_TCP_PORT) -> "SceneLabClient":
        reader, writer = await asyncio.open_connection(host, port)
        return cls(reader, writer)

    async def send(self, env: MessageEnvelope) -> str:
        self._writer.write(encode_frame(serialize_envelope(env)))
        await self._writer.drain()
        return env.id

    async def recv(self) -> MessageEnvelope:
        """Next envelope off the wire, in arrival order."""
        while not self._queue:
            chunk = await self._reader.read(65536)
            if not chunk:
                raise ConnectionError("server closed the connection")
            self._queue.extend(parse_envelope(t) for t in self._decoder.feed(chunk))
        return self._queue.pop(0)

    async def request(self, req_type: str, body: dict | None = None,
                      timeout: float = 30.0) -> MessageEnvelope:
        """Send one request and wait for its correlated response."""
        req = make_request(req_type, body)
        await self.send(req)
        return await asyncio.wait_for(self._await_id(req.id), timeout)

    async def _await_id(self, rid: str) -> MessageEnvelope:
        if rid in self._stray:
            return self._stray.pop(rid)
        while True:
            env = await self.recv()
            if env.id == rid:
                return env
            self._stray[env.id] = env

    async def close(self) -> None:
        self._writer.close()
        try:
            await self._writer.wait_closed()
        except (ConnectionError, OSError):
            pass
