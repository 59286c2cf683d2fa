"""Core geometric types: vectors, quaternion transforms, triangle meshes.

Scene units are metres (1 unit = 1 metre). All stored geometry is finite:
NaN/Inf never make it into a constructed value, so downstream code can rely
on arithmetic staying well-defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InvalidMesh, InvalidTransform, NonFiniteInput

Quaternion = tuple[float, float, float, float]  # (w, x, y, z)

IDENTITY_QUAT: Quaternion = (1.0, 0.0, 0.0, 0.0)

_QUAT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class Vec3:
    """A 3D point or direction, components in metres."""

    x: float
    y: float
    z: float

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise NonFiniteInput("cannot normalize zero vector")
        return self.scaled(1.0 / n)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    @staticmethod
    def from_any(v: "Vec3 | Sequence[float]") -> "Vec3":
        if isinstance(v, Vec3):
            return v
        x, y, z = v
        return Vec3(float(x), float(y), float(z))


def require_finite(v: Vec3, what: str = "vector") -> Vec3:
    if not v.is_finite():
        raise NonFiniteInput(f"{what} has non-finite components: {v}")
    return v


def measure_distance(a: Vec3, b: Vec3) -> float:
    """Magnitude of the Euclidean distance between two points, in metres."""
    require_finite(a, "point a")
    require_finite(b, "point b")
    return math.dist(a.as_tuple(), b.as_tuple())


# --- quaternions -------------------------------------------------------------

def quat_norm(q: Quaternion) -> float:
    w, x, y, z = q
    return math.sqrt(w * w + x * x + y * y + z * z)


def quat_normalize(q: Quaternion) -> Quaternion:
    n = quat_norm(q)
    if n == 0.0 or not math.isfinite(n):
        raise InvalidTransform("cannot normalize degenerate quaternion")
    w, x, y, z = q
    return (w / n, x / n, y / n, z / n)


def quat_multiply(a: Quaternion, b: Quaternion) -> Quaternion:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conjugate(q: Quaternion) -> Quaternion:
    w, x, y, z = q
    return (w, -x, -y, -z)


def quat_rotate(q: Quaternion, v: Vec3) -> Vec3:
    """Rotate a vector by a unit quaternion: q * (0,v) * q⁻¹."""
    w, x, y, z = q
    # expanded form; avoids building intermediate quaternions
    tx = 2.0 * (y * v.z - z * v.y)
    ty = 2.0 * (z * v.x - x * v.z)
    tz = 2.0 * (x * v.y - y * v.x)
    return Vec3(
        v.x + w * tx + (y * tz - z * ty),
        v.y + w * ty + (z * tx - x * tz),
        v.z + w * tz + (x * ty - y * tx),
    )


def quat_from_matrix(m: Sequence[Sequence[float]]) -> Quaternion:
    """Unit quaternion from a 3x3 rotation matrix (Shepperd's method)."""
    m00, m01, m02 = m[0]
    m10, m11, m12 = m[1]
    m20, m21, m22 = m[2]
    trace = m00 + m11 + m22
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        q = (0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s)
    elif m00 > m11 and m00 > m22:
        s = math.sqrt(1.0 + m00 - m11 - m22) * 2.0
        q = ((m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s)
    elif m11 > m22:
        s = math.sqrt(1.0 + m11 - m00 - m22) * 2.0
        q = ((m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s)
    else:
        s = math.sqrt(1.0 + m22 - m00 - m11) * 2.0
        q = ((m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s)
    return quat_normalize(q)


@dataclass(frozen=True)
class Transform:
    """Rigid transform plus per-axis scale.

    The quaternion must be unit (within 1e-6) and every scale component
    strictly positive; construction rejects anything else.
    """

    translation: Vec3 = field(default_factory=lambda: Vec3(0.0, 0.0, 0.0))
    rotation: Quaternion = IDENTITY_QUAT
    scale: Vec3 = field(default_factory=lambda: Vec3(1.0, 1.0, 1.0))

    def __post_init__(self):
        if not self.translation.is_finite():
            raise InvalidTransform(f"non-finite translation: {self.translation}")
        if len(self.rotation) != 4 or not all(math.isfinite(c) for c in self.rotation):
            raise InvalidTransform(f"invalid quaternion: {self.rotation!r}")
        n = quat_norm(self.rotation)
        if abs(n - 1.0) > _QUAT_NORM_TOL:
            raise InvalidTransform(f"quaternion norm {n} not within {_QUAT_NORM_TOL} of 1")
        if not self.scale.is_finite() or min(self.scale.as_tuple()) <= 0.0:
            raise InvalidTransform(f"scale components must be finite and > 0: {self.scale}")

    def apply(self, p: Vec3) -> Vec3:
        """Transform a point: scale, then rotate, then translate."""
        scaled = Vec3(p.x * self.scale.x, p.y * self.scale.y, p.z * self.scale.z)
        return quat_rotate(self.rotation, scaled) + self.translation

    def to_dict(self) -> dict:
        return {
            "translation": list(self.translation.as_tuple()),
            "rotation": list(self.rotation),
            "scale": list(self.scale.as_tuple()),
        }

    @staticmethod
    def from_dict(d: dict) -> "Transform":
        try:
            return Transform(
                translation=Vec3.from_any(d["translation"]),
                rotation=tuple(float(c) for c in d["rotation"]),
                scale=Vec3.from_any(d["scale"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidTransform(f"malformed transform payload: {exc}") from exc

    @staticmethod
    def identity() -> "Transform":
        return Transform()


Edge = tuple[int, int]


def edge_key(a: int, b: int) -> Edge:
    """Canonical undirected edge key."""
    return (a, b) if a < b else (b, a)


class TriangleMesh:
    """Indexed triangle mesh with derived edge/vertex adjacency.

    Invariants enforced at construction: every index in range, no
    degenerate triangle (repeated vertex), all coordinates finite.
    Adjacency maps are derived lazily from the triangle list and cached;
    the vertex and triangle lists must not be mutated afterwards.
    """

    def __init__(self, vertices: Iterable[Vec3], triangles: Iterable[Sequence[int]]):
        self.vertices: list[Vec3] = [Vec3.from_any(v) for v in vertices]
        self.triangles: list[tuple[int, int, int]] = []
        n = len(self.vertices)
        for t_index, tri in enumerate(triangles):
            i, j, k = (int(tri[0]), int(tri[1]), int(tri[2]))
            if not (0 <= i < n and 0 <= j < n and 0 <= k < n):
                raise InvalidMesh(f"triangle {t_index} references vertex out of range: ({i},{j},{k})")
            if i == j or j == k or i == k:
                raise InvalidMesh(f"triangle {t_index} is degenerate: ({i},{j},{k})")
            self.triangles.append((i, j, k))
        for v_index, v in enumerate(self.vertices):
            if not v.is_finite():
                raise InvalidMesh(f"vertex {v_index} has non-finite components")
        self._edge_incidence: dict[Edge, int] | None = None
        self._vertex_neighbors: list[set[int]] | None = None

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def edge_incidence(self) -> dict[Edge, int]:
        """Map undirected edge -> number of incident triangles."""
        if self._edge_incidence is None:
            inc: dict[Edge, int] = {}
            for i, j, k in self.triangles:
                for e in (edge_key(i, j), edge_key(j, k), edge_key(i, k)):
                    inc[e] = inc.get(e, 0) + 1
            self._edge_incidence = inc
        return self._edge_incidence

    @property
    def vertex_neighbors(self) -> list[set[int]]:
        """One-ring neighbourhood of each vertex (edge-connected vertices)."""
        if self._vertex_neighbors is None:
            nbrs: list[set[int]] = [set() for _ in range(len(self.vertices))]
            for a, b in self.edge_incidence:
                nbrs[a].add(b)
                nbrs[b].add(a)
            self._vertex_neighbors = nbrs
        return self._vertex_neighbors

    def boundary_edge_count(self) -> int:
        return sum(1 for c in self.edge_incidence.values() if c == 1)


def is_watertight(mesh: TriangleMesh) -> bool:
    """True iff every undirected edge is incident to exactly two triangles.

    An empty triangle list is vacuously watertight; callers that care about
    emptiness check it separately.
    """
    return all(count == 2 for count in mesh.edge_incidence.values())
