"""Scene data model: objects with transforms and original-position semantics.

A scene object keeps two transforms: ``current`` (live pose) and
``original`` (pose at load time). ``original`` is never rewritten after
load; exact restore and the viewer's ghost clone both depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import mesh_io
from .errors import UnknownObject
from .geometry import Transform, TriangleMesh, Vec3

DEFAULT_UNIT_SCALE = 1.0


@dataclass
class SceneObject:
    id: str
    name: str
    mesh: TriangleMesh
    current: Transform
    original: Transform
    label: str | None = None


@dataclass
class Scene:
    scene_id: str
    objects: list[SceneObject]
    source_file: str
    unit_scale: float
    _by_id: dict[str, SceneObject] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {obj.id: obj for obj in self.objects}
        if len(self._by_id) != len(self.objects):
            raise ValueError("duplicate object ids in scene")

    def get(self, object_id: str) -> SceneObject:
        obj = self._by_id.get(object_id)
        if obj is None:
            raise UnknownObject(f"no object {object_id!r} in scene {self.scene_id!r}")
        return obj

    def has(self, object_id: str) -> bool:
        return object_id in self._by_id

    def pristine_copy(self) -> "Scene":
        """The scene as loaded: current == original, labels cleared.

        Meshes are shared (they are never mutated); transforms are frozen
        values so sharing them is safe too.
        """
        objects = [
            SceneObject(id=o.id, name=o.name, mesh=o.mesh, current=o.original, original=o.original)
            for o in self.objects
        ]
        return Scene(self.scene_id, objects, self.source_file, self.unit_scale)

    def summary(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "unit_scale": self.unit_scale,
            "objects": [
                {
                    "id": o.id,
                    "name": o.name,
                    "vertex_count": len(o.mesh.vertices),
                    "triangle_count": len(o.mesh.triangles),
                    "current": o.current.to_dict(),
                    "original": o.original.to_dict(),
                    "label": o.label,
                }
                for o in self.objects
            ],
        }


def load_scene(path: str | Path, unit_scale: float = DEFAULT_UNIT_SCALE, scene_id: str | None = None) -> Scene:
    """Import a scene from an OBJ or glTF file.

    ``unit_scale`` converts file units to metres; it is baked into vertex
    positions and node translations so that all loaded geometry is metric.
    Object ids are ``<scene_id>/<node-name>/<ordinal>`` with a per-name
    ordinal, so duplicate node names stay unambiguous.
    """
    if not (unit_scale > 0):
        raise ValueError(f"unit_scale must be > 0, got {unit_scale}")
    path = Path(path)
    if scene_id is None:
        scene_id = path.stem
    model = mesh_io.load_model(path)

    scaled_meshes: dict[int, TriangleMesh] = {}

    def scaled_mesh(index: int) -> TriangleMesh:
        if index not in scaled_meshes:
            src = model.meshes[index]
            if unit_scale == 1.0:
                scaled_meshes[index] = src
            else:
                scaled_meshes[index] = TriangleMesh(
                    [v.scaled(unit_scale) for v in src.vertices], src.triangles
                )
        return scaled_meshes[index]

    name_counts: dict[str, int] = {}
    objects: list[SceneObject] = []
    for node in model.nodes:
        ordinal = name_counts.get(node.name, 0)
        name_counts[node.name] = ordinal + 1
        t = node.transform
        placed = Transform(
            translation=t.translation.scaled(unit_scale),
            rotation=t.rotation,
            scale=t.scale,
        )
        objects.append(
            SceneObject(
                id=f"{scene_id}/{node.name}/{ordinal}",
                name=node.name,
                mesh=scaled_mesh(node.mesh_index),
                current=placed,
                original=placed,
            )
        )
    return Scene(scene_id=scene_id, objects=objects, source_file=str(path), unit_scale=unit_scale)


def set_transform(scene: Scene, object_id: str, transform: Transform) -> dict:
    """Set an object's current pose. Returns the event payload for the log."""
    obj = scene.get(object_id)
    obj.current = transform
    return {"object_id": object_id, "transform": transform.to_dict()}


def restore_original(scene: Scene, object_id: str) -> dict:
    """Snap an object back to its stored original pose (exact, not recomputed)."""
    obj = scene.get(object_id)
    obj.current = obj.original
    return {"object_id": object_id, "transform": obj.original.to_dict()}


def set_label(scene: Scene, object_id: str, label: str) -> dict:
    obj = scene.get(object_id)
    obj.label = label
    return {"object_id": object_id, "label": label}


def world_vertices(obj: SceneObject) -> list[Vec3]:
    """Object-space mesh vertices placed by the object's current transform."""
    t = obj.current
    return [t.apply(v) for v in obj.mesh.vertices]
