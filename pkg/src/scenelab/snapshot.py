"""Virtual-screenshot rendering for classification.

A deterministic software rasterizer: the selection's induced sub-mesh is
perspective-projected, snapped to a 1/16-pixel integer grid, and filled
with exact integer edge tests, flat-shaded per face against a fixed light.
Identical inputs produce byte-identical pixel buffers on any platform.

The pipeline is split in two stages on purpose: ``project_to_device``
produces the snapped device-space triangles, and ``rasterize`` fills them.
Verification can re-derive pixel coverage from the device triangles with
an independent point-in-triangle test.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import EmptySelection, InvalidImage, NothingVisible
from .geometry import Vec3, quat_conjugate, quat_rotate
from .scene import Scene
from .selection import CameraPose, VertexSelection, check_selection

BACKGROUND = (18, 18, 18)
NEAR_PLANE = 0.01  # metres; vertices nearer than this are clipped
DEFAULT_PADDING = 0.10
SUBPIXEL = 16  # fixed-point device grid: 1/16 pixel

_LIGHT_DIR = (1.0 / math.sqrt(3.0),) * 3
_BASE_COLOR = (200.0, 203.0, 209.0)
_AMBIENT = 0.25
_DIFFUSE = 0.75


@dataclass(frozen=True)
class Snapshot:
    """Row-major RGB8 rendering of a selection, ready for classification."""

    pixels: bytes
    width: int
    height: int
    camera: CameraPose
    selection: VertexSelection

    def __post_init__(self):
        if len(self.pixels) != 3 * self.width * self.height:
            raise ValueError("pixel buffer length must be 3*width*height")


@dataclass(frozen=True)
class DeviceTriangle:
    """One triangle in snapped device space.

    ``xy`` are fixed-point pixel coordinates (units of 1/SUBPIXEL pixel),
    ``inv_depth`` the per-vertex reciprocal camera depths used for the
    z-test, ``color`` the flat-shaded RGB fill.
    """

    xy: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]
    inv_depth: tuple[float, float, float]
    color: tuple[int, int, int]


def induced_triangles(mesh, sel: VertexSelection) -> list[tuple[int, int, int]]:
    selected = set(sel.indices)
    return [t for t in mesh.triangles if t[0] in selected and t[1] in selected and t[2] in selected]


def project_to_device(scene: Scene, camera: CameraPose, sel: VertexSelection,
                      padding: float = DEFAULT_PADDING) -> list[DeviceTriangle]:
    """Project the selection's induced sub-mesh into snapped device space.

    Framing: the projected bounding box of the selected vertices, grown by
    ``padding`` on each side, fills the image (aspect preserved, centered).
    Triangles crossing the near plane are clipped in camera space first.
    """
    obj = scene.get(sel.object_id)
    mesh = obj.mesh
    check_selection(mesh, sel)
    if not sel.indices:
        raise EmptySelection("selection has no vertices")
    tris = induced_triangles(mesh, sel)
    if not tris:
        raise EmptySelection(f"selection of {len(sel)} vertices induces no triangle")

    width, height = camera.resolution
    inv_rot = quat_conjugate(camera.orientation)
    place = obj.current

    cam_pts: dict[int, Vec3] = {}

    def cam_point(i: int) -> Vec3:
        p = cam_pts.get(i)
        if p is None:
            world = place.apply(mesh.vertices[i])
            p = quat_rotate(inv_rot, world - camera.position)
            cam_pts[i] = p
        return p

    # framing window from the selected vertices in front of the near plane
    front = [(i, cam_point(i)) for i in sel.indices if cam_point(i).z <= -NEAR_PLANE]
    if not front:
        raise NothingVisible("every selected vertex is behind the near plane")
    proj_x = []
    proj_y = []
    for _, c in front:
        proj_x.append(c.x / -c.z)
        proj_y.append(c.y / -c.z)
    x_min, x_max = min(proj_x), max(proj_x)
    y_min, y_max = min(proj_y), max(proj_y)
    extent_x = x_max - x_min
    extent_y = y_max - y_min
    cx = (x_min + x_max) / 2.0
    cy = (y_min + y_max) / 2.0
    aspect = width / height
    if max(extent_x, extent_y) < 1e-12:
        # point-like selection: fall back to the camera's own FOV window
        win_h = 2.0 * math.tan(camera.vertical_fov / 2.0)
        win_w = win_h * aspect
    else:
        padded_w = extent_x * (1.0 + 2.0 * padding)
        padded_h = extent_y * (1.0 + 2.0 * padding)
        if padded_w / max(padded_h, 1e-300) > aspect:
            win_w = padded_w
            win_h = padded_w / aspect
        else:
            win_h = padded_h
            win_w = padded_h * aspect
    x0 = cx - win_w / 2.0
    y1 = cy + win_h / 2.0

    # guard band: clamping keeps integer edge products inside int64 when
    # near-plane-clipped geometry projects absurdly far off-window
    bound = 1 << 20

    def to_device(c: Vec3) -> tuple[int, int, float]:
        px = c.x / -c.z
        py = c.y / -c.z
        u = (px - x0) / win_w * width
        v = (y1 - py) / win_h * height
        dx = int(math.floor(u * SUBPIXEL + 0.5))
        dy = int(math.floor(v * SUBPIXEL + 0.5))
        return (
            min(bound, max(-bound, dx)),
            min(bound, max(-bound, dy)),
            1.0 / -c.z,
        )

    out: list[DeviceTriangle] = []
    for (ia, ib, ic) in tris:
        corners = (cam_point(ia), cam_point(ib), cam_point(ic))
        color = _face_color(place.apply(mesh.vertices[ia]),
                            place.apply(mesh.vertices[ib]),
                            place.apply(mesh.vertices[ic]))
        for clipped in _clip_near(corners):
            a, b, c = (to_device(p) for p in clipped)
            out.append(DeviceTriangle(
                xy=((a[0], a[1]), (b[0], b[1]), (c[0], c[1])),
                inv_depth=(a[2], b[2], c[2]),
                color=color,
            ))
    return out


def _face_color(wa: Vec3, wb: Vec3, wc: Vec3) -> tuple[int, int, int]:
    n = (wb - wa).cross(wc - wa)
    norm = n.norm()
    if norm == 0.0:
        lambert = 0.0
    else:
        lx, ly, lz = _LIGHT_DIR
        lambert = abs((n.x * lx + n.y * ly + n.z * lz) / norm)
    level = _AMBIENT + _DIFFUSE * lambert
    return tuple(min(255, int(ch * level + 0.5)) for ch in _BASE_COLOR)


def _clip_near(corners: tuple[Vec3, Vec3, Vec3]) -> list[tuple[Vec3, Vec3, Vec3]]:
    """Sutherland-Hodgman clip of one triangle against z <= -NEAR_PLANE."""
    plane_z = -NEAR_PLANE
    inside = [c.z <= plane_z for c in corners]
    if all(inside):
        return [corners]
    if not any(inside):
        return []
    poly: list[Vec3] = []
    for i in range(3):
        cur, nxt = corners[i], corners[(i + 1) % 3]
        cur_in, nxt_in = inside[i], inside[(i + 1) % 3]
        if cur_in:
            poly.append(cur)
        if cur_in != nxt_in:
            t = (plane_z - cur.z) / (nxt.z - cur.z)
            poly.append(Vec3(
                cur.x + (nxt.x - cur.x) * t,
                cur.y + (nxt.y - cur.y) * t,
                plane_z,
            ))
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def rasterize(device_tris: list[DeviceTriangle], width: int, height: int) -> bytes:
    """Fill device triangles into an RGB8 buffer with integer edge tests.

    A pixel is covered when its center lies inside or on the boundary of a
    triangle (exact integer predicate). Depth test keeps the nearest
    surface; ties keep the earlier triangle, so output is order-stable.
    """
    frame = np.empty((height, width, 3), dtype=np.uint8)
    frame[:, :] = BACKGROUND
    zbuf = np.zeros((height, width), dtype=np.float64)

    for tri in device_tris:
        (ax, ay), (bx, by), (cx, cy) = tri.xy
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 == 0:
            continue
        px_min = max(0, (min(ax, bx, cx) - 8) // SUBPIXEL)
        px_max = min(width - 1, (max(ax, bx, cx) - 8 + SUBPIXEL - 1) // SUBPIXEL)
        py_min = max(0, (min(ay, by, cy) - 8) // SUBPIXEL)
        py_max = min(height - 1, (max(ay, by, cy) - 8 + SUBPIXEL - 1) // SUBPIXEL)
        if px_min > px_max or py_min > py_max:
            continue
        xs = np.arange(px_min, px_max + 1, dtype=np.int64) * SUBPIXEL + 8
        ys = np.arange(py_min, py_max + 1, dtype=np.int64) * SUBPIXEL + 8
        gx, gy = np.meshgrid(xs, ys)
        w0 = (cx - bx) * (gy - by) - (cy - by) * (gx - bx)
        w1 = (ax - cx) * (gy - cy) - (ay - cy) * (gx - cx)
        w2 = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
        if area2 < 0:
            w0, w1, w2 = -w0, -w1, -w2
        covered = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not covered.any():
            continue
        d0, d1, d2 = tri.inv_depth
        inv_depth = (w0 * d0 + w1 * d1 + w2 * d2) / abs(area2)
        window = (slice(py_min, py_max + 1), slice(px_min, px_max + 1))
        wins = covered & (inv_depth > zbuf[window])
        zbuf[window][wins] = inv_depth[wins]
        frame[window][wins] = tri.color
    return frame.tobytes()


def render_snapshot(scene: Scene, camera: CameraPose, sel: VertexSelection,
                    padding: float = DEFAULT_PADDING) -> Snapshot:
    """Render the virtual screenshot of a selection for classification."""
    device_tris = project_to_device(scene, camera, sel, padding)
    width, height = camera.resolution
    pixels = rasterize(device_tris, width, height)
    return Snapshot(pixels=pixels, width=width, height=height, camera=camera, selection=sel)


def snapshot_to_png(snap: Snapshot) -> bytes:
    """Encode a snapshot as 8-bit RGB PNG (no alpha)."""
    img = Image.frombytes("RGB", (snap.width, snap.height), snap.pixels)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> tuple[int, int, bytes]:
    """Decode PNG bytes to (width, height, RGB8 pixels); InvalidImage if broken."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise InvalidImage(f"cannot decode PNG: {exc}") from exc
    rgb = img.convert("RGB")
    return rgb.width, rgb.height, rgb.tobytes()
