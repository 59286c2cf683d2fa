"""Vertex-selection workflow: refinement, vetting and the observation plane.

Expand/shrink use one-ring edge adjacency: expanding adds every vertex that
shares an edge with the selection, shrinking removes every vertex with an
edge-neighbour outside it. Both are monotone, which makes the refinement
loop predictable: shrink(expand(sel)) always contains sel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegeneratePose, EmptySelection, IndexOutOfRange
from .geometry import (
    Quaternion,
    TriangleMesh,
    Vec3,
    is_watertight,
    measure_distance,  # noqa: F401  (re-exported: measurement lives with selection tools)
    quat_from_matrix,
    quat_rotate,
    require_finite,
)

_EPS = 1e-12


@dataclass(frozen=True)
class VertexSelection:
    """An investigator-marked set of mesh vertices on one scene object."""

    object_id: str
    indices: tuple[int, ...]

    def __post_init__(self):
        deduped = tuple(sorted(set(int(i) for i in self.indices)))
        object.__setattr__(self, "indices", deduped)

    def __len__(self) -> int:
        return len(self.indices)


def check_selection(mesh: TriangleMesh, sel: VertexSelection) -> None:
    if sel.indices and (sel.indices[0] < 0 or sel.indices[-1] >= len(mesh.vertices)):
        bad = [i for i in sel.indices if not (0 <= i < len(mesh.vertices))]
        raise IndexOutOfRange(f"selection indices out of range for mesh of {len(mesh.vertices)} vertices: {bad}")


def expand_selection(mesh: TriangleMesh, sel: VertexSelection) -> VertexSelection:
    """Selection plus the one-ring neighbours of every selected vertex."""
    check_selection(mesh, sel)
    neighbors = mesh.vertex_neighbors
    grown = set(sel.indices)
    for i in sel.indices:
        grown.update(neighbors[i])
    return VertexSelection(sel.object_id, tuple(grown))


def shrink_selection(mesh: TriangleMesh, sel: VertexSelection) -> VertexSelection:
    """Selection minus every vertex that has an edge-neighbour outside it."""
    check_selection(mesh, sel)
    neighbors = mesh.vertex_neighbors
    selected = set(sel.indices)
    kept = tuple(i for i in sel.indices if neighbors[i] <= selected)
    return VertexSelection(sel.object_id, kept)


@dataclass(frozen=True)
class ClosedMeshReport:
    """Vetting result for a selection: its induced sub-mesh and closedness."""

    submesh: TriangleMesh
    watertight: bool
    boundary_edges: int
    triangle_count: int


def validate_selection(mesh: TriangleMesh, sel: VertexSelection) -> ClosedMeshReport:
    """Vet a selection: build the induced sub-mesh and check it is closed.

    The induced sub-mesh consists of every mesh triangle whose three
    vertices are all selected. A selection inducing no triangle cannot be
    vetted and raises EmptySelection.
    """
    check_selection(mesh, sel)
    selected = set(sel.indices)
    induced = [t for t in mesh.triangles if t[0] in selected and t[1] in selected and t[2] in selected]
    if not induced:
        raise EmptySelection(f"selection of {len(sel)} vertices induces no triangle")
    used = sorted({i for t in induced for i in t})
    remap = {orig: local for local, orig in enumerate(used)}
    submesh = TriangleMesh(
        [mesh.vertices[i] for i in used],
        [(remap[a], remap[b], remap[c]) for a, b, c in induced],
    )
    return ClosedMeshReport(
        submesh=submesh,
        watertight=is_watertight(submesh),
        boundary_edges=submesh.boundary_edge_count(),
        triangle_count=len(induced),
    )


@dataclass(frozen=True)
class CameraPose:
    """The examiner's active camera: pose, vertical FOV and target resolution."""

    position: Vec3
    orientation: Quaternion
    vertical_fov: float = math.radians(60.0)
    resolution: tuple[int, int] = (512, 512)

    def __post_init__(self):
        if not (0.0 < self.vertical_fov < math.pi):
            raise DegeneratePose(f"vertical_fov must be in (0, pi), got {self.vertical_fov}")
        w, h = self.resolution
        if w < 16 or h < 16:
            raise DegeneratePose(f"resolution must be at least 16x16, got {self.resolution}")
        require_finite(self.position, "camera position")

    def up_vector(self) -> Vec3:
        return quat_rotate(self.orientation, Vec3(0.0, 1.0, 0.0))

    def forward_vector(self) -> Vec3:
        # right-handed camera space looking down -z
        return quat_rotate(self.orientation, Vec3(0.0, 0.0, -1.0))

    @staticmethod
    def looking_at(position: Vec3, target: Vec3, up: Vec3 = Vec3(0.0, 1.0, 0.0),
                   vertical_fov: float = math.radians(60.0),
                   resolution: tuple[int, int] = (512, 512)) -> "CameraPose":
        forward = target - position
        if forward.norm() < 1e-12:
            raise DegeneratePose("camera position coincides with its target")
        f = forward.normalized()
        side = f.cross(up)
        if side.norm() < 1e-9:
            raise DegeneratePose("camera view direction is parallel to the up vector")
        s = side.normalized()
        u = s.cross(f)
        # columns are the camera basis in world space: +x, +y, -z view direction
        q = quat_from_matrix((
            (s.x, u.x, -f.x),
            (s.y, u.y, -f.y),
            (s.z, u.z, -f.z),
        ))
        return CameraPose(position, q, vertical_fov, resolution)


@dataclass(frozen=True)
class ObservationPlane:
    """Plane anchored at a selection, facing the examiner's camera."""

    center: Vec3
    normal: Vec3
    up: Vec3


def selection_centroid(mesh: TriangleMesh, sel: VertexSelection) -> Vec3:
    check_selection(mesh, sel)
    if not sel.indices:
        raise EmptySelection("cannot take centroid of empty selection")
    sx = sy = sz = 0.0
    for i in sel.indices:
        v = mesh.vertices[i]
        sx += v.x
        sy += v.y
        sz += v.z
    n = len(sel.indices)
    return Vec3(sx / n, sy / n, sz / n)


def observation_plane(camera: CameraPose, mesh: TriangleMesh, sel: VertexSelection) -> ObservationPlane:
    """Build the observation plane for a selection.

    Center is the selection centroid; the normal points from the centroid
    toward the camera; up is the camera's up vector projected into the
    plane and normalized.
    """
    center = selection_centroid(mesh, sel)
    to_camera = camera.position - center
    dist = to_camera.norm()
    if dist < _EPS:
        raise DegeneratePose("camera position coincides with selection centroid")
    normal = to_camera.scaled(1.0 / dist)
    camera_up = camera.up_vector()
    in_plane = camera_up - normal.scaled(camera_up.dot(normal))
    n = in_plane.norm()
    if n < 1e-9:
        raise DegeneratePose("camera up vector is parallel to the observation plane normal")
    up = in_plane.scaled(1.0 / n)
    return ObservationPlane(center=center, normal=normal, up=up)
