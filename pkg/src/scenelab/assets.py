"""Server-side asset catalog.

Scenes live under one root as ``<scene_id>/scene.obj`` or
``<scene_id>/scene.gltf``, optionally with a ``meta.json`` carrying the
display name and unit scale. Every path handed out by the catalog is
confined under the root — traversal and symlink escapes are rejected.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import AssetNotFound, AssetRootMissing, ForbiddenPath, UnknownScene
from .scene import Scene, load_scene

SCENE_FILE_NAMES = ("scene.obj", "scene.gltf")


class AssetCatalog:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise AssetRootMissing(f"asset root {self.root} is not a directory")
        self._real_root = self.root.resolve()

    def resolve(self, relpath: str) -> Path:
        """Map a client-supplied relative path to a real file under the root."""
        if not relpath or relpath.startswith(("/", "\\")) or ":" in relpath:
            raise ForbiddenPath(f"asset path {relpath!r} is not relative")
        parts = Path(relpath).parts
        if any(p in ("..", ".") for p in parts):
            raise ForbiddenPath(f"asset path {relpath!r} escapes the asset root")
        candidate = (self.root / relpath).resolve()
        if self._real_root not in candidate.parents and candidate != self._real_root:
            raise ForbiddenPath(f"asset path {relpath!r} escapes the asset root")
        return candidate

    def read_asset(self, relpath: str) -> bytes:
        path = self.resolve(relpath)
        if not path.is_file():
            raise AssetNotFound(f"no asset at {relpath!r}")
        return path.read_bytes()

    def _scene_dir(self, scene_id: str) -> Path:
        path = self.resolve(scene_id)
        if not path.is_dir():
            raise UnknownScene(f"no scene {scene_id!r} in the catalog")
        return path

    def scene_file(self, scene_id: str) -> Path:
        d = self._scene_dir(scene_id)
        for name in SCENE_FILE_NAMES:
            if (d / name).is_file():
                return d / name
        raise UnknownScene(f"scene {scene_id!r} has no scene.obj or scene.gltf")

    def scene_meta(self, scene_id: str) -> dict:
        meta_path = self._scene_dir(scene_id) / "meta.json"
        meta = {"name": scene_id, "unit_scale": 1.0}
        if meta_path.is_file():
            loaded = json.loads(meta_path.read_text(encoding="utf-8"))
            meta.update({k: loaded[k] for k in ("name", "unit_scale") if k in loaded})
        return meta

    def list_scenes(self) -> list[dict]:
        out = []
        for child in sorted(self.root.iterdir()):
            if not child.is_dir():
                continue
            scene_file = next((child / n for n in SCENE_FILE_NAMES if (child / n).is_file()), None)
            if scene_file is None:
                continue
            meta = self.scene_meta(child.name)
            out.append({
                "scene_id": child.name,
                "file": f"{child.name}/{scene_file.name}",
                "name": meta["name"],
                "unit_scale": float(meta["unit_scale"]),
            })
        return out

    def open_scene(self, scene_id: str) -> Scene:
        meta = self.scene_meta(scene_id)
        return load_scene(self.scene_file(scene_id),
                          unit_scale=float(meta["unit_scale"]), scene_id=scene_id)
