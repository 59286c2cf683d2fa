"""Detection backend contract, the deterministic stub backend, and labelling.

A backend is anything that exposes ``info()`` and ``detect_png(image)``.
The stub backend resolves images by content hash against a manifest, which
makes every detection test exactly reproducible. Real neural backends run
as remote workers and are proxied by the server through the same interface.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .errors import BackendProtocolError
from .scene import Scene, SceneObject, set_label
from .snapshot import decode_png

DEFAULT_MIN_SCORE = 0.5

# the 80 COCO object classes, in canonical order
COCO_CLASSES = (
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train",
    "truck", "boat", "traffic light", "fire hydrant", "stop sign",
    "parking meter", "bench", "bird", "cat", "dog", "horse", "sheep", "cow",
    "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella", "handbag",
    "tie", "suitcase", "frisbee", "skis", "snowboard", "sports ball", "kite",
    "baseball bat", "baseball glove", "skateboard", "surfboard",
    "tennis racket", "bottle", "wine glass", "cup", "fork", "knife", "spoon",
    "bowl", "banana", "apple", "sandwich", "orange", "broccoli", "carrot",
    "hot dog", "pizza", "donut", "cake", "chair", "couch", "potted plant",
    "bed", "dining table", "toilet", "tv", "laptop", "mouse", "remote",
    "keyboard", "cell phone", "microwave", "oven", "toaster", "sink",
    "refrigerator", "book", "clock", "vase", "scissors", "teddy bear",
    "hair drier", "toothbrush",
)


@dataclass(frozen=True)
class Detection:
    """One classified object: class name, confidence, normalized box."""

    class_name: str
    score: float
    bbox: tuple[float, float, float, float]  # (x_min, y_min, x_max, y_max) in [0,1]

    def to_dict(self) -> dict:
        return {"class": self.class_name, "score": self.score, "bbox": list(self.bbox)}


@dataclass(frozen=True)
class DetectionBackendInfo:
    backend_id: str
    label_set: tuple[str, ...]
    remote: bool

    def __post_init__(self):
        if not self.label_set:
            raise ValueError("label_set must be non-empty")


@dataclass(frozen=True)
class DetectionOutcome:
    detections: tuple[Detection, ...]
    backend_id: str
    latency_ms: int


class DetectionBackend(Protocol):
    def info(self) -> DetectionBackendInfo: ...

    def detect_png(self, image: bytes) -> list[Detection]: ...


def validate_detection(raw: object) -> Detection:
    """Coerce one backend result into a Detection, rejecting malformed output."""
    if isinstance(raw, Detection):
        d = raw
    elif isinstance(raw, dict):
        try:
            box = raw["bbox"]
            d = Detection(
                class_name=raw["class"],
                score=float(raw["score"]),
                bbox=(float(box[0]), float(box[1]), float(box[2]), float(box[3])),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise BackendProtocolError(f"malformed detection entry {raw!r}: {exc}") from exc
    else:
        raise BackendProtocolError(f"detection entry must be an object, got {type(raw).__name__}")
    if not isinstance(d.class_name, str) or not d.class_name:
        raise BackendProtocolError(f"detection class name must be a non-empty string: {d!r}")
    if not (0.0 <= d.score <= 1.0):
        raise BackendProtocolError(f"detection score {d.score} outside [0,1]")
    x0, y0, x1, y1 = d.bbox
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise BackendProtocolError(f"detection bbox {d.bbox} is not a normalized box")
    return d


def image_hash(image: bytes) -> str:
    return hashlib.sha256(image).hexdigest()


def load_manifest(path: str | Path) -> dict[str, list[Detection]]:
    """Load a stub manifest: image SHA-256 -> detection list."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BackendProtocolError(f"cannot load stub manifest {path}: {exc}") from exc
    return parse_manifest(raw)


def parse_manifest(raw: dict) -> dict[str, list[Detection]]:
    if not isinstance(raw, dict):
        raise BackendProtocolError("stub manifest must be a JSON object")
    manifest: dict[str, list[Detection]] = {}
    for key, entries in raw.items():
        if len(key) != 64 or key != key.lower() or any(c not in "0123456789abcdef" for c in key):
            raise BackendProtocolError(f"manifest key {key!r} is not a lowercase sha256 hex digest")
        manifest[key] = [validate_detection(e) for e in entries]
    return manifest


class StubBackend:
    """Manifest-driven backend: detections depend only on image content hash."""

    def __init__(self, manifest: dict[str, list[Detection]] | None = None,
                 backend_id: str = "stub", label_set: tuple[str, ...] = COCO_CLASSES):
        self.manifest = dict(manifest or {})
        self._info = DetectionBackendInfo(backend_id=backend_id, label_set=tuple(label_set), remote=False)

    @classmethod
    def from_file(cls, path: str | Path, backend_id: str = "stub") -> "StubBackend":
        return cls(load_manifest(path), backend_id=backend_id)

    def info(self) -> DetectionBackendInfo:
        return self._info

    def detect_png(self, image: bytes) -> list[Detection]:
        return list(self.manifest.get(image_hash(image), []))


def postprocess_detections(raw, min_score: float) -> list[Detection]:
    """Validate, threshold and sort raw backend output (shared by all backends)."""
    if not (0.0 <= min_score <= 1.0):
        raise ValueError(f"min_score must be in [0,1], got {min_score}")
    if not isinstance(raw, (list, tuple)):
        raise BackendProtocolError(f"backend returned {type(raw).__name__}, expected a list")
    kept = [d for d in (validate_detection(r) for r in raw) if d.score >= min_score]
    kept.sort(key=lambda d: (-d.score, d.class_name))
    return kept


def detect(backend: DetectionBackend, image: bytes, min_score: float = DEFAULT_MIN_SCORE) -> DetectionOutcome:
    """Run a backend over a PNG image and post-process its output.

    Results are validated, filtered to ``score >= min_score`` and sorted by
    descending score (ties broken by class name). An empty list is a valid
    "no results" outcome, distinct from an error.
    """
    if not (0.0 <= min_score <= 1.0):
        raise ValueError(f"min_score must be in [0,1], got {min_score}")
    decode_png(image)  # raises InvalidImage on garbage before the backend sees it
    start = time.perf_counter()
    raw = backend.detect_png(image)
    latency_ms = int((time.perf_counter() - start) * 1000.0)
    return DetectionOutcome(
        detections=tuple(postprocess_detections(raw, min_score)),
        backend_id=backend.info().backend_id,
        latency_ms=latency_ms,
    )


def filter_and_label(scene: Scene, object_id: str,
                     detections: list[Detection] | tuple[Detection, ...]) -> tuple[SceneObject, dict]:
    """Apply the top detection as the object's label.

    Empty detections leave the label untouched and produce a warning event
    (the "no results" path the investigator must be told about). With equal
    top scores the lexicographically smaller class name wins.
    """
    obj = scene.get(object_id)
    if not detections:
        return obj, {"event": "no_detection", "object_id": object_id}
    top = min(detections, key=lambda d: (-d.score, d.class_name))
    set_label(scene, object_id, top.class_name)
    return obj, {"event": "label", "object_id": object_id, "label": top.class_name, "score": top.score}
