import asyncio
import json

import pytest

from scenelab_worker import wire


def feed_reader(*chunks: bytes) -> asyncio.StreamReader:
    reader = asyncio.StreamReader()
    for chunk in chunks:
        reader.feed_data(chunk)
    reader.feed_eof()
    return reader


def test_encode_frame_prefixes_length():
    frame = wire.encode_frame('{"v":1}')
    assert frame[:4] == (7).to_bytes(4, "big")
    assert frame[4:] == b'{"v":1}'


def test_encode_frame_rejects_out_of_bounds():
    with pytest.raises(wire.WireError):
        wire.encode_frame("x")
    with pytest.raises(wire.WireError):
        wire.encode_frame("y" * (wire.MAX_FRAME_BYTES + 1))


def test_read_frame_reassembles_split_chunks():
    frame = wire.encode_frame('{"v":1,"id":"a","type":"ping","body":{}}')

    async def scenario():
        # split at every byte boundary
        for cut in range(1, len(frame)):
            reader = feed_reader(frame[:cut], frame[cut:])
            assert await wire.read_frame(reader) == frame[4:].decode()
            assert await wire.read_frame(reader) is None

    asyncio.run(scenario())


def test_read_frame_none_on_clean_eof():
    async def scenario():
        return await wire.read_frame(feed_reader())

    assert asyncio.run(scenario()) is None


def test_read_frame_raises_on_torn_stream():
    frame = wire.encode_frame('{"v":1}')

    async def scenario(data):
        await wire.read_frame(feed_reader(data))

    with pytest.raises(wire.WireError, match="header"):
        asyncio.run(scenario(frame[:2]))
    with pytest.raises(wire.WireError, match="body"):
        asyncio.run(scenario(frame[:-3]))


def test_read_frame_rejects_oversized_declaration():
    async def scenario():
        header = (wire.MAX_FRAME_BYTES + 1).to_bytes(4, "big")
        await wire.read_frame(feed_reader(header))

    with pytest.raises(wire.WireError, match="cap"):
        asyncio.run(scenario())


def test_parse_envelope_round_trip():
    env = wire.envelope("w-1", "classify_result", {"detections": []})
    assert wire.parse_envelope(json.dumps(env)) == env


@pytest.mark.parametrize("text", [
    "not json",
    "[1]",
    json.dumps({"v": 2, "id": "a", "type": "ping", "body": {}}),
    json.dumps({"v": 1, "id": 5, "type": "ping", "body": {}}),
    json.dumps({"v": 1, "id": "a", "type": "", "body": {}}),
    json.dumps({"v": 1, "id": "", "type": "ping_result", "body": {}}),
    json.dumps({"v": 1, "id": "a", "type": "ping", "body": 3}),
])
def test_parse_envelope_rejects_malformed(text):
    with pytest.raises(wire.WireError):
        wire.parse_envelope(text)


def test_empty_id_allowed_only_on_errors():
    env = wire.make_error("", "bad_frame", "boom")
    assert wire.parse_envelope(json.dumps(env))["id"] == ""


def test_is_response():
    assert wire.is_response(wire.envelope("a", "classify_result", {}))
    assert wire.is_response(wire.make_error("a", "x", "y"))
    assert not wire.is_response(wire.envelope("a", "classify", {}))
