import json
from pathlib import Path

import pytest

from scenelab.geometry import TriangleMesh, Vec3

TETRA_OBJ = """\
o tetra
v 0 0 0
v 1 0 0
v 0 1 0
v 0 0 1
f 1 3 2
f 1 2 4
f 1 4 3
f 2 3 4
"""


def tetra_mesh() -> TriangleMesh:
    return TriangleMesh(
        vertices=[Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)],
        triangles=[(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)],
    )


def cube_mesh() -> TriangleMesh:
    # unit cube, 12 triangles, outward winding
    v = [Vec3(x, y, z) for z in (0, 1) for y in (0, 1) for x in (0, 1)]
    quads = [
        (0, 1, 3, 2),  # z=0
        (4, 6, 7, 5),  # z=1
        (0, 4, 5, 1),  # y=0
        (2, 3, 7, 6),  # y=1
        (0, 2, 6, 4),  # x=0
        (1, 5, 7, 3),  # x=1
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return TriangleMesh(vertices=v, triangles=tris)


def single_triangle_mesh() -> TriangleMesh:
    return TriangleMesh(
        vertices=[Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)],
        triangles=[(0, 1, 2)],
    )


def solid_png(width: int = 64, height: int = 64, color=(120, 30, 200)) -> bytes:
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="PNG")
    return buf.getvalue()


def write_manifest(path: Path, mapping: dict) -> Path:
    path.write_text(json.dumps(mapping), encoding="utf-8")
    return path


@pytest.fixture
def tetra_obj_file(tmp_path: Path) -> Path:
    p = tmp_path / "tetra.obj"
    p.write_text(TETRA_OBJ, encoding="utf-8")
    return p


@pytest.fixture
def asset_root(tmp_path: Path) -> Path:
    """Catalog with one scene: assets/tetra/scene.obj (+ meta.json)."""
    root = tmp_path / "assets"
    scene_dir = root / "tetra"
    scene_dir.mkdir(parents=True)
    (scene_dir / "scene.obj").write_text(TETRA_OBJ, encoding="utf-8")
    (scene_dir / "meta.json").write_text(
        json.dumps({"name": "Tetra fixture", "unit_scale": 1.0}), encoding="utf-8")
    return root
