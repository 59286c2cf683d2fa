"""Examination log registry and configuration persistence.

The log is a single append-only JSONL file: one record per line, strictly
increasing ``seq``, flushed (and fsynced by default) before ``append``
returns. Named scene configurations live as JSON files in a sidecar
directory. Both replace a database with an embeddable store exposing the
same contract: write, query, replay.
"""

from __future__ import annotations

import errno
import json
import logging
import shutil
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    NameCollision,
    ReplayMismatch,
    SerializationError,
    StorageFull,
    UnknownConfig,
    UnknownObject,
)
from .geometry import Transform, Vec3, measure_distance
from .scene import Scene, load_scene, restore_original, set_label, set_transform

logger = logging.getLogger(__name__)

ACTIONS = frozenset({
    "select", "expand", "shrink", "classify_request", "classify_result",
    "label", "grab", "move", "release", "restore", "measure",
    "save_config", "load_config", "scene_open",
})

_DISTANCE_TOL = 1e-9


def now_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass(frozen=True)
class LogEntry:
    seq: int
    timestamp: int  # UTC milliseconds
    session_id: str
    action: str
    payload: dict

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "ts": self.timestamp,
            "session": self.session_id,
            "action": self.action,
            "payload": self.payload,
        }

    @staticmethod
    def from_dict(d: dict) -> "LogEntry":
        return LogEntry(
            seq=int(d["seq"]),
            timestamp=int(d["ts"]),
            session_id=str(d["session"]),
            action=str(d["action"]),
            payload=d["payload"],
        )


class LogStore:
    """Append-only log with a single serialized writer.

    Reopening after a crash keeps the longest clean prefix; a torn final
    line is discarded and reported through ``recovered_torn_lines``.
    """

    def __init__(self, path: str | Path, durable: bool = True):
        self.path = Path(path)
        self.durable = durable
        self.recovered_torn_lines = 0
        self._lock = threading.Lock()
        self._entries: list[LogEntry] = []
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._recover()
        self._fh = open(self.path, "ab")

    def _recover(self) -> None:
        if not self.path.exists():
            return
        raw = self.path.read_bytes()
        good_end = 0
        expected_seq = 1
        for line_end in _line_ends(raw):
            line = raw[good_end:line_end].rstrip(b"\n")
            try:
                entry = LogEntry.from_dict(json.loads(line.decode("utf-8")))
            except (ValueError, KeyError, TypeError):
                break
            if entry.seq != expected_seq:
                raise SerializationError(
                    f"log store corrupt: expected seq {expected_seq}, found {entry.seq}"
                )
            self._entries.append(entry)
            expected_seq += 1
            good_end = line_end
        if good_end < len(raw):
            self.recovered_torn_lines = raw[good_end:].count(b"\n") + (0 if raw.endswith(b"\n") else 1)
            logger.warning(
                "log store %s: discarding %d torn/corrupt trailing line(s)",
                self.path, self.recovered_torn_lines,
            )
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)

    def append(self, session_id: str, action: str, payload: dict,
               timestamp: int | None = None) -> LogEntry:
        if action not in ACTIONS:
            raise ValueError(f"unknown log action {action!r}")
        with self._lock:
            entry = LogEntry(
                seq=len(self._entries) + 1,
                timestamp=now_ms() if timestamp is None else timestamp,
                session_id=session_id,
                action=action,
                payload=payload,
            )
            try:
                line = json.dumps(entry.to_dict(), ensure_ascii=False,
                                  separators=(",", ":"), allow_nan=False)
            except (TypeError, ValueError) as exc:
                raise SerializationError(f"log payload is not serializable: {exc}") from exc
            try:
                self._fh.write(line.encode("utf-8") + b"\n")
                self._fh.flush()
                if self.durable:
                    import os
                    os.fsync(self._fh.fileno())
            except OSError as exc:
                if exc.errno == errno.ENOSPC:
                    raise StorageFull("log device is full") from exc
                raise
            self._entries.append(entry)
            return entry

    def query(self, session_id: str | None = None, action: str | None = None,
              seq_min: int | None = None, seq_max: int | None = None) -> list[LogEntry]:
        with self._lock:
            snapshot = list(self._entries)
        out = []
        for e in snapshot:
            if session_id is not None and e.session_id != session_id:
                continue
            if action is not None and e.action != action:
                continue
            if seq_min is not None and e.seq < seq_min:
                continue
            if seq_max is not None and e.seq > seq_max:
                continue
            out.append(e)
        return out

    def entries(self) -> list[LogEntry]:
        return self.query()

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()


def _line_ends(raw: bytes):
    start = 0
    while True:
        nl = raw.find(b"\n", start)
        if nl < 0:
            return
        yield nl + 1
        start = nl + 1


# --- scene configurations ---------------------------------------------------------


@dataclass(frozen=True)
class Measurement:
    a: Vec3
    b: Vec3
    distance: float

    def __post_init__(self):
        if abs(self.distance - measure_distance(self.a, self.b)) > _DISTANCE_TOL:
            raise SerializationError(
                f"measurement distance {self.distance} inconsistent with endpoints"
            )

    def to_dict(self) -> dict:
        return {"a": list(self.a.as_tuple()), "b": list(self.b.as_tuple()), "distance": self.distance}

    @staticmethod
    def from_dict(d: dict) -> "Measurement":
        return Measurement(Vec3.from_any(d["a"]), Vec3.from_any(d["b"]), float(d["distance"]))


@dataclass(frozen=True)
class SceneConfiguration:
    """Snapshot of examination state: per-object pose and label, measurements."""

    scene_id: str
    objects: tuple[dict, ...]  # {"id", "transform": Transform dict, "label"}
    measurements: tuple[Measurement, ...]
    created_at: int
    name: str

    def state_dict(self) -> dict:
        """Canonical state for equality checks: excludes name and timestamps."""
        return {
            "scene_id": self.scene_id,
            "objects": list(self.objects),
            "measurements": [m.to_dict() for m in self.measurements],
        }

    def state_equal(self, other: "SceneConfiguration") -> bool:
        return self.state_dict() == other.state_dict()

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "objects": list(self.objects),
            "measurements": [m.to_dict() for m in self.measurements],
            "created_at": self.created_at,
            "name": self.name,
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneConfiguration":
        return SceneConfiguration(
            scene_id=str(d["scene_id"]),
            objects=tuple(d["objects"]),
            measurements=tuple(Measurement.from_dict(m) for m in d["measurements"]),
            created_at=int(d.get("created_at", 0)),
            name=str(d.get("name", "")),
        )


def configuration_from_scene(scene: Scene, measurements: list[Measurement],
                             name: str = "", created_at: int | None = None) -> SceneConfiguration:
    objects = tuple(
        {"id": o.id, "transform": o.current.to_dict(), "label": o.label}
        for o in scene.objects
    )
    return SceneConfiguration(
        scene_id=scene.scene_id,
        objects=objects,
        measurements=tuple(measurements),
        created_at=now_ms() if created_at is None else created_at,
        name=name,
    )


def apply_configuration(scene: Scene, config: SceneConfiguration) -> None:
    """Set object poses and labels from a configuration."""
    for entry in config.objects:
        obj_id = entry["id"]
        if not scene.has(obj_id):
            raise UnknownObject(f"configuration references unknown object {obj_id!r}")
        set_transform(scene, obj_id, Transform.from_dict(entry["transform"]))
        scene.get(obj_id).label = entry.get("label")


class ConfigStore:
    """Named configurations as JSON files under one directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, name: str) -> Path:
        if not name or any(c in name for c in "/\\") or name.startswith("."):
            raise ValueError(f"invalid configuration name {name!r}")
        return self.root / f"{name}.json"

    def save(self, config: SceneConfiguration, overwrite: bool = False) -> None:
        path = self._path(config.name)
        if path.exists() and not overwrite:
            raise NameCollision(f"configuration {config.name!r} already exists")
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(config.to_dict(), indent=2, allow_nan=False), encoding="utf-8")
        tmp.replace(path)

    def load(self, name: str) -> SceneConfiguration:
        path = self._path(name)
        if not path.exists():
            raise UnknownConfig(f"no configuration named {name!r}")
        return SceneConfiguration.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def names(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))


# --- replay -------------------------------------------------------------------------


def replay(scene: Scene, entries: list[LogEntry]) -> SceneConfiguration:
    """Re-apply a session log against the scene's pristine state.

    Only state-bearing actions matter: move, restore, label, measure and
    load_config. The result is the configuration the live session ended
    with; timestamps play no part.
    """
    state = scene.pristine_copy()
    measurements: list[Measurement] = []
    last_seq = 0
    for entry in entries:
        if entry.seq <= last_seq:
            raise ReplayMismatch(f"log entries out of order at seq {entry.seq}")
        last_seq = entry.seq
        payload = entry.payload
        try:
            if entry.action == "move":
                set_transform(state, payload["object_id"], Transform.from_dict(payload["transform"]))
            elif entry.action == "restore":
                restore_original(state, payload["object_id"])
            elif entry.action == "label":
                set_label(state, payload["object_id"], payload["label"])
            elif entry.action == "measure":
                measurements.append(Measurement.from_dict(payload))
            elif entry.action == "load_config":
                config = SceneConfiguration.from_dict(payload["config"])
                apply_configuration(state, config)
                measurements = list(config.measurements)
            elif entry.action in ACTIONS:
                pass  # selection, grabs, classify traffic: no configuration effect
            else:
                raise ReplayMismatch(f"unknown action {entry.action!r} at seq {entry.seq}")
        except UnknownObject as exc:
            raise ReplayMismatch(f"seq {entry.seq}: {exc}") from exc
        except (KeyError, TypeError) as exc:
            raise ReplayMismatch(f"seq {entry.seq}: malformed payload: {exc}") from exc
    return configuration_from_scene(state, measurements, name="(replay)", created_at=0)


# --- examination export ----------------------------------------------------------------


@dataclass
class ExaminationExport:
    configuration: SceneConfiguration
    entries: list[LogEntry]
    meta: dict = field(default_factory=dict)


def export_examination(scene: Scene, entries: list[LogEntry], out_dir: str | Path,
                       session_id: str, tool_version: str) -> ExaminationExport:
    """Write a self-contained examination export: config, log, meta, scene copy."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = replay(scene, entries)
    scene_src = Path(scene.source_file)
    scene_copy = f"scene{scene_src.suffix}"
    shutil.copyfile(scene_src, out / scene_copy)
    meta = {
        "tool_version": tool_version,
        "session_id": session_id,
        "scene_id": scene.scene_id,
        "scene_file": scene_copy,
        "unit_scale": scene.unit_scale,
        "exported_at": now_ms(),
        "entry_count": len(entries),
    }
    (out / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, allow_nan=False), encoding="utf-8")
    with open(out / "log.jsonl", "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_dict(), ensure_ascii=False, separators=(",", ":")) + "\n")
    (out / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return ExaminationExport(configuration=config, entries=list(entries), meta=meta)


def load_examination(export_dir: str | Path) -> tuple[Scene, ExaminationExport]:
    ex = Path(export_dir)
    meta = json.loads((ex / "meta.json").read_text(encoding="utf-8"))
    config = SceneConfiguration.from_dict(json.loads((ex / "config.json").read_text(encoding="utf-8")))
    entries = [
        LogEntry.from_dict(json.loads(line))
        for line in (ex / "log.jsonl").read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    scene = load_scene(ex / meta["scene_file"], unit_scale=meta["unit_scale"], scene_id=meta["scene_id"])
    return scene, ExaminationExport(configuration=config, entries=entries, meta=meta)


def verify_examination(export_dir: str | Path) -> tuple[bool, str]:
    """Replay an export's log and compare against its stored configuration."""
    scene, ex = load_examination(export_dir)
    replayed = replay(scene, ex.entries)
    if replayed.state_equal(ex.configuration):
        return True, "replayed configuration matches stored configuration"
    diff = _diff_states(ex.configuration.state_dict(), replayed.state_dict())
    return False, diff


def _diff_states(stored: dict, replayed: dict) -> str:
    lines = ["replayed configuration differs from stored configuration:"]
    stored_objs = {o["id"]: o for o in stored["objects"]}
    replayed_objs = {o["id"]: o for o in replayed["objects"]}
    for obj_id in sorted(set(stored_objs) | set(replayed_objs)):
        s, r = stored_objs.get(obj_id), replayed_objs.get(obj_id)
        if s != r:
            lines.append(f"  object {obj_id}:")
            lines.append(f"    stored:   {s}")
            lines.append(f"    replayed: {r}")
    if stored["measurements"] != replayed["measurements"]:
        lines.append(f"  measurements stored:   {stored['measurements']}")
        lines.append(f"  measurements replayed: {replayed['measurements']}")
    if stored["scene_id"] != replayed["scene_id"]:
        lines.append(f"  scene_id stored {stored['scene_id']!r} vs replayed {replayed['scene_id']!r}")
    return "\n".join(lines)
