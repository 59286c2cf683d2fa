"""Import of scene geometry from OBJ and a glTF-2.0 subset.

Both parsers produce file-unit geometry; unit conversion to metres happens
at scene assembly. The glTF subset covers static triangle meshes with
embedded (data URI) or sidecar binary buffers. Anything requiring animation,
skinning, sparse accessors or the GLB container is rejected explicitly.
"""

from __future__ import annotations

import base64
import json
import math
import struct
import urllib.parse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyScene, InvalidMesh, ParseError, UnsupportedFeature
from .geometry import Quaternion, Transform, TriangleMesh, Vec3, quat_from_matrix


@dataclass
class ParsedNode:
    name: str
    mesh_index: int
    transform: Transform


@dataclass
class ParsedModel:
    """File-space geometry: shared meshes plus the nodes that instance them."""

    meshes: list[TriangleMesh]
    nodes: list[ParsedNode]


def load_model(path: str | Path) -> ParsedModel:
    """Parse a mesh file, dispatching on extension (.obj or .gltf)."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return parse_obj(path.read_text(encoding="utf-8", errors="replace"))
    if suffix == ".gltf":
        return parse_gltf(path.read_bytes(), base_dir=path.parent)
    if suffix == ".glb":
        raise UnsupportedFeature("GLB binary container is not supported; use .gltf with sidecar buffers")
    raise ParseError(f"unrecognized mesh format: {path.name!r} (expected .obj or .gltf)")


# --- OBJ ----------------------------------------------------------------------

def parse_obj(text: str) -> ParsedModel:
    """Parse ASCII OBJ: v/f/g/o directives, slash-style face indices.

    Vertex indices are global per the format; each named group becomes one
    mesh with compacted local indices. Polygonal faces are fan-triangulated.
    """
    vertices: list[Vec3] = []
    # group name -> (local vertex order, global->local map, triangles)
    groups: list[dict] = []
    current: dict | None = None

    def ensure_group(name: str) -> dict:
        g = {"name": name, "vmap": {}, "verts": [], "tris": []}
        groups.append(g)
        return g

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError(f"vertex needs 3 coordinates: {raw!r}", line=lineno)
            try:
                x, y, z = float(parts[1]), float(parts[2]), float(parts[3])
            except ValueError as exc:
                raise ParseError(f"bad vertex coordinate: {raw!r}", line=lineno) from exc
            if not all(math.isfinite(c) for c in (x, y, z)):
                raise ParseError(f"non-finite vertex coordinate: {raw!r}", line=lineno)
            vertices.append(Vec3(x, y, z))
        elif tag in ("g", "o"):
            name = " ".join(parts[1:]) if len(parts) > 1 else "default"
            current = ensure_group(name)
        elif tag == "f":
            if current is None:
                current = ensure_group("default")
            if len(parts) < 4:
                raise ParseError(f"face needs at least 3 vertices: {raw!r}", line=lineno)
            corner_indices = []
            for corner in parts[1:]:
                idx_text = corner.split("/")[0]
                try:
                    idx = int(idx_text)
                except ValueError as exc:
                    raise ParseError(f"bad face index {corner!r}", line=lineno) from exc
                if idx > 0:
                    gi = idx - 1
                elif idx < 0:
                    gi = len(vertices) + idx
                else:
                    raise ParseError("face index 0 is invalid (OBJ is 1-based)", line=lineno)
                if not (0 <= gi < len(vertices)):
                    raise ParseError(f"face index {idx} out of range (have {len(vertices)} vertices)", line=lineno)
                vmap = current["vmap"]
                if gi not in vmap:
                    vmap[gi] = len(current["verts"])
                    current["verts"].append(vertices[gi])
                corner_indices.append(vmap[gi])
            for a, b in zip(corner_indices[1:-1], corner_indices[2:]):
                tri = (corner_indices[0], a, b)
                if len(set(tri)) != 3:
                    raise ParseError(f"degenerate triangle in face: {raw!r}", line=lineno)
                current["tris"].append(tri)
        # vt, vn, usemtl, mtllib, s and anything else: ignored

    meshes: list[TriangleMesh] = []
    nodes: list[ParsedNode] = []
    for g in groups:
        if not g["tris"]:
            continue
        try:
            mesh = TriangleMesh(g["verts"], g["tris"])
        except InvalidMesh as exc:
            raise ParseError(f"group {g['name']!r}: {exc}") from exc
        nodes.append(ParsedNode(name=g["name"], mesh_index=len(meshes), transform=Transform.identity()))
        meshes.append(mesh)
    if not nodes:
        raise EmptyScene("OBJ file contains no faces")
    return ParsedModel(meshes=meshes, nodes=nodes)


# --- glTF 2.0 subset ------------------------------------------------------------

_GLTF_COMPONENT_DTYPES = {
    5121: np.uint8,
    5123: np.uint16,
    5125: np.uint32,
    5126: np.float32,
}

_TYPE_COMPONENT_COUNT = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4}


def parse_gltf(data: bytes, base_dir: Path | None = None) -> ParsedModel:
    """Parse a glTF 2.0 JSON document restricted to static triangle meshes."""
    if data[:4] == b"glTF":
        raise UnsupportedFeature("GLB binary container is not supported; use .gltf with sidecar buffers")
    try:
        doc = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"glTF is not valid UTF-8: {exc}", offset=exc.start) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"glTF is not valid JSON: {exc.msg}", offset=exc.pos) from exc

    version = str(doc.get("asset", {}).get("version", ""))
    if not version.startswith("2."):
        raise UnsupportedFeature(f"glTF version {version or 'missing'} (need 2.x)")
    if doc.get("animations"):
        raise UnsupportedFeature("glTF animations are not supported")
    if doc.get("skins"):
        raise UnsupportedFeature("glTF skinning is not supported")

    buffers = [_load_buffer(b, base_dir, i) for i, b in enumerate(doc.get("buffers", []))]
    views = doc.get("bufferViews", [])
    accessors = doc.get("accessors", [])

    def accessor_array(index: int) -> np.ndarray:
        try:
            acc = accessors[index]
        except IndexError:
            raise ParseError(f"accessor {index} does not exist")
        if "sparse" in acc:
            raise UnsupportedFeature("sparse accessors are not supported")
        comp = acc.get("componentType")
        if comp not in _GLTF_COMPONENT_DTYPES:
            raise UnsupportedFeature(f"accessor componentType {comp} is not supported")
        dtype = np.dtype(_GLTF_COMPONENT_DTYPES[comp]).newbyteorder("<")
        ncomp = _TYPE_COMPONENT_COUNT.get(acc.get("type"))
        if ncomp is None:
            raise UnsupportedFeature(f"accessor type {acc.get('type')!r} is not supported")
        count = int(acc.get("count", 0))
        view = views[acc["bufferView"]]
        buf = buffers[view["buffer"]]
        start = int(view.get("byteOffset", 0)) + int(acc.get("byteOffset", 0))
        stride = int(view.get("byteStride", 0)) or dtype.itemsize * ncomp
        packed = dtype.itemsize * ncomp
        need = start + (count - 1) * stride + packed if count else start
        if need > len(buf):
            raise ParseError(f"accessor {index} overruns buffer (need {need} bytes, have {len(buf)})")
        if stride == packed:
            flat = np.frombuffer(buf, dtype=dtype, count=count * ncomp, offset=start)
            return flat.reshape(count, ncomp)
        rows = np.empty((count, ncomp), dtype=dtype)
        for r in range(count):
            off = start + r * stride
            rows[r] = np.frombuffer(buf, dtype=dtype, count=ncomp, offset=off)
        return rows

    meshes: list[TriangleMesh] = []
    mesh_names: list[str] = []
    for mi, mesh_def in enumerate(doc.get("meshes", [])):
        verts: list[Vec3] = []
        tris: list[tuple[int, int, int]] = []
        for prim in mesh_def.get("primitives", []):
            mode = prim.get("mode", 4)
            if mode != 4:
                raise UnsupportedFeature(f"glTF primitive mode {mode} (only TRIANGLES supported)")
            attrs = prim.get("attributes", {})
            if "POSITION" not in attrs:
                raise ParseError(f"mesh {mi}: primitive has no POSITION attribute")
            pos = accessor_array(attrs["POSITION"]).astype(np.float64)
            if pos.shape[1] != 3:
                raise ParseError(f"mesh {mi}: POSITION accessor is not VEC3")
            if not np.isfinite(pos).all():
                raise ParseError(f"mesh {mi}: non-finite vertex position")
            base = len(verts)
            verts.extend(Vec3(float(x), float(y), float(z)) for x, y, z in pos)
            if "indices" in prim:
                idx = accessor_array(prim["indices"]).reshape(-1)
            else:
                idx = np.arange(len(pos), dtype=np.uint32)
            if len(idx) % 3 != 0:
                raise ParseError(f"mesh {mi}: index count {len(idx)} not divisible by 3")
            tris.extend(
                (base + int(idx[t]), base + int(idx[t + 1]), base + int(idx[t + 2]))
                for t in range(0, len(idx), 3)
            )
        try:
            meshes.append(TriangleMesh(verts, tris))
        except InvalidMesh as exc:
            raise ParseError(f"mesh {mi} ({mesh_def.get('name', '?')}): {exc}") from exc
        mesh_names.append(mesh_def.get("name") or f"mesh{mi}")

    node_defs = doc.get("nodes", [])
    scene_index = doc.get("scene", 0)
    scene_defs = doc.get("scenes", [])
    if scene_defs:
        try:
            roots = scene_defs[scene_index].get("nodes", [])
        except IndexError:
            raise ParseError(f"default scene index {scene_index} out of range")
    else:
        roots = list(range(len(node_defs)))

    nodes: list[ParsedNode] = []

    def walk(index: int, parent: np.ndarray, seen: frozenset[int]):
        if index in seen:
            raise ParseError(f"node {index} participates in a cycle")
        try:
            node = node_defs[index]
        except IndexError:
            raise ParseError(f"node index {index} out of range")
        if "skin" in node:
            raise UnsupportedFeature(f"node {index} uses skinning")
        world = parent @ _node_local_matrix(node, index)
        if "mesh" in node:
            mi = node["mesh"]
            if not (0 <= mi < len(meshes)):
                raise ParseError(f"node {index} references missing mesh {mi}")
            name = node.get("name") or mesh_names[mi]
            nodes.append(ParsedNode(name=name, mesh_index=mi, transform=_decompose_trs(world, index)))
        for child in node.get("children", []):
            walk(child, world, seen | {index})

    identity = np.eye(4)
    for r in roots:
        walk(r, identity, frozenset())

    if not nodes or all(len(meshes[n.mesh_index].triangles) == 0 for n in nodes):
        raise EmptyScene("glTF file contains no triangle geometry")
    return ParsedModel(meshes=meshes, nodes=nodes)


def _load_buffer(buf_def: dict, base_dir: Path | None, index: int) -> bytes:
    uri = buf_def.get("uri")
    if uri is None:
        raise UnsupportedFeature(f"buffer {index} has no uri (GLB-style buffers unsupported)")
    if uri.startswith("data:"):
        comma = uri.find(",")
        if comma < 0 or ";base64" not in uri[:comma]:
            raise ParseError(f"buffer {index}: unsupported data URI encoding")
        try:
            data = base64.b64decode(uri[comma + 1:], validate=True)
        except Exception as exc:
            raise ParseError(f"buffer {index}: bad base64 payload: {exc}") from exc
    else:
        if base_dir is None:
            raise ParseError(f"buffer {index}: sidecar uri {uri!r} but no base directory")
        rel = urllib.parse.unquote(uri)
        path = (base_dir / rel).resolve()
        if base_dir.resolve() not in path.parents and path != base_dir.resolve():
            raise ParseError(f"buffer {index}: uri {uri!r} escapes the model directory")
        if not path.exists():
            raise ParseError(f"buffer {index}: sidecar file not found: {rel}")
        data = path.read_bytes()
    expected = buf_def.get("byteLength")
    if expected is not None and len(data) < int(expected):
        raise ParseError(f"buffer {index}: {len(data)} bytes, declared {expected}")
    return data


def _node_local_matrix(node: dict, index: int) -> np.ndarray:
    if "matrix" in node:
        m = np.array(node["matrix"], dtype=np.float64)
        if m.shape != (16,):
            raise ParseError(f"node {index}: matrix must have 16 entries")
        return m.reshape(4, 4).T  # glTF matrices are column-major
    m = np.eye(4)
    t = node.get("translation", [0.0, 0.0, 0.0])
    r = node.get("rotation", [0.0, 0.0, 0.0, 1.0])  # glTF order: (x, y, z, w)
    s = node.get("scale", [1.0, 1.0, 1.0])
    x, y, z, w = (float(c) for c in r)
    rot = _quat_to_matrix((w, x, y, z))
    m[:3, :3] = rot @ np.diag([float(c) for c in s])
    m[:3, 3] = [float(c) for c in t]
    return m


def _quat_to_matrix(q: Quaternion) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def _decompose_trs(m: np.ndarray, node_index: int) -> Transform:
    """Decompose a 4x4 world matrix into translation/rotation/scale.

    Shear and mirroring cannot be represented as TRS; both are rejected.
    """
    translation = Vec3(float(m[0, 3]), float(m[1, 3]), float(m[2, 3]))
    basis = m[:3, :3]
    if np.linalg.det(basis) <= 0:
        raise UnsupportedFeature(f"node {node_index}: mirrored or singular transform")
    scale = np.linalg.norm(basis, axis=0)
    rot = basis / scale
    if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6):
        raise UnsupportedFeature(f"node {node_index}: transform contains shear")
    quat = quat_from_matrix(rot.tolist())
    return Transform(
        translation=translation,
        rotation=quat,
        scale=Vec3(float(scale[0]), float(scale[1]), float(scale[2])),
    )
