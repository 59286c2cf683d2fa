"""Headless virtual-scene examination engine and network service.

Scenes imported from OBJ/glTF are examined through vertex selection,
deterministic snapshot rendering, pluggable object detection, precise
measurement and an append-only, replayable examination log — all exposed
over a length-prefixed TCP protocol with a WebSocket bridge for browsers.
"""

from .errors import SceneLabError
from .geometry import Transform, TriangleMesh, Vec3, is_watertight, measure_distance
from .scene import Scene, SceneObject, load_scene
from .selection import (
    CameraPose,
    VertexSelection,
    expand_selection,
    observation_plane,
    shrink_selection,
    validate_selection,
)
from .snapshot import Snapshot, render_snapshot, snapshot_to_png
from .detection import COCO_CLASSES, Detection, StubBackend, detect
from .logbook import LogEntry, LogStore, SceneConfiguration, replay
from .protocol import MessageEnvelope, encode_frame, parse_envelope, serialize_envelope
from .server import SceneLabServer, ServerConfig, run_server

__all__ = [
    "SceneLabError",
    "Vec3", "Transform", "TriangleMesh", "is_watertight", "measure_distance",
    "Scene", "SceneObject", "load_scene",
    "VertexSelection", "CameraPose", "expand_selection", "shrink_selection",
    "validate_selection", "observation_plane",
    "Snapshot", "render_snapshot", "snapshot_to_png",
    "Detection", "StubBackend", "detect", "COCO_CLASSES",
    "LogStore", "LogEntry", "SceneConfiguration", "replay",
    "MessageEnvelope", "encode_frame", "parse_envelope", "serialize_envelope",
    "SceneLabServer", "ServerConfig", "run_server",
]

__version__ = "0.1.0"
