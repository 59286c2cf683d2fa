"""Operator command line: serve, import scenes, bench, export, replay, detect.

Flag precedence: explicit flags beat SCENELAB_* environment variables,
which beat built-in defaults. Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

from __future__ import annotations

import functools
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import click

from .assets import AssetCatalog
from .benchmark import GroundTruth, render_aggregate_table, run_benchmark
from .detection import StubBackend
from .detection import detect as run_detect
from .errors import SceneLabError
from .logbook import LogStore, export_examination, load_examination, replay, verify_examination
from .protocol import DEFAULT_TCP_PORT, DEFAULT_WS_PORT
from .scene import load_scene
from .server import ServerConfig, run_server

try:
    from importlib.metadata import version as _dist_version
    TOOL_VERSION = _dist_version("scenelab")
except Exception:  # pragma: no cover - editable installs always have metadata
    TOOL_VERSION = "0.0.0"


def _resolve(flag, env_name: str, default):
    if flag is not None:
        return flag
    return os.environ.get(env_name, default)


def _runtime_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SceneLabError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


@click.group()
@click.version_option(TOOL_VERSION, prog_name="scenelab")
@click.option("-v", "--verbose", is_flag=True, help="chatty logging on stderr")
def main(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=None, help=f"TCP port [default: $SCENELAB_PORT or {DEFAULT_TCP_PORT}]")
@click.option("--ws-port", type=int, default=None, help=f"WebSocket port [default: $SCENELAB_WS_PORT or {DEFAULT_WS_PORT}]")
@click.option("--assets", "asset_root", default=None, help="asset root [default: $SCENELAB_ASSETS or ./assets]")
@click.option("--log", "log_path", default=None, help="examination log file [default: $SCENELAB_LOG or ./scenelab-log.jsonl]")
@click.option("--manifest", default=None, type=click.Path(exists=True, dir_okay=False),
              help="stub detection manifest to register as the local backend")
@click.option("--static", "static_root", default=None, type=click.Path(exists=True, file_okay=False),
              help="directory of viewer files to serve over HTTP")
@click.option("--config-dir", default=None, help="saved-configuration directory [default: next to the log]")
@click.option("--no-fsync", is_flag=True, help="skip fsync per log append (tests only)")
@_runtime_errors
def serve(host, port, ws_port, asset_root, log_path, manifest, static_root, config_dir, no_fsync):
    """Run the examination server until SIGTERM/SIGINT."""
    config = ServerConfig(
        asset_root=_resolve(asset_root, "SCENELAB_ASSETS", "assets"),
        log_path=_resolve(log_path, "SCENELAB_LOG", "scenelab-log.jsonl"),
        host=host,
        tcp_port=int(_resolve(port, "SCENELAB_PORT", DEFAULT_TCP_PORT)),
        ws_port=int(_resolve(ws_port, "SCENELAB_WS_PORT", DEFAULT_WS_PORT)),
        config_dir=config_dir,
        stub_manifest=manifest,
        static_root=static_root,
        durable_log=not no_fsync,
    )
    run_server(config)


@main.command("import-scene")
@click.argument("scene_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--id", "scene_id", required=True, help="catalog id for the scene")
@click.option("--unit-scale", type=float, default=1.0, show_default=True,
              help="multiplier mapping file units to metres")
@click.option("--name", default=None, help="display name [default: the id]")
@click.option("--assets", "asset_root", default=None)
@click.option("--force", is_flag=True, help="replace an existing scene with the same id")
@_runtime_errors
def import_scene(scene_file, scene_id, unit_scale, name, asset_root, force):
    """Validate a model file and install it into the asset catalog."""
    if not scene_id or any(c in scene_id for c in "/\\") or scene_id.startswith("."):
        raise click.UsageError(f"invalid scene id {scene_id!r}")
    src = Path(scene_file)
    if src.suffix.lower() not in (".obj", ".gltf"):
        raise click.UsageError(f"unsupported scene format {src.suffix!r} (use .obj or .gltf)")
    scene = load_scene(src, unit_scale=unit_scale, scene_id=scene_id)
    root = Path(_resolve(asset_root, "SCENELAB_ASSETS", "assets"))
    dest = root / scene_id
    if dest.exists() and not force:
        click.echo(f"error: scene {scene_id!r} already exists (use --force)", err=True)
        sys.exit(1)
    dest.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(src, dest / f"scene{src.suffix.lower()}")
    for sidecar in _gltf_sidecars(src):
        shutil.copyfile(sidecar, dest / sidecar.name)
    (dest / "meta.json").write_text(
        json.dumps({"name": name or scene_id, "unit_scale": unit_scale}, indent=2),
        encoding="utf-8")
    click.echo(f"imported {scene_id}: {len(scene.objects)} object(s) from {src.name}")


def _gltf_sidecars(src: Path) -> list[Path]:
    if src.suffix.lower() != ".gltf":
        return []
    doc = json.loads(src.read_text(encoding="utf-8"))
    out = []
    for buf in doc.get("buffers", []):
        uri = buf.get("uri", "")
        if uri and not uri.startswith("data:"):
            sidecar = src.parent / uri
            if sidecar.is_file():
                out.append(sidecar)
    return out


@main.command()
@click.option("--backend", type=click.Choice(["stub"]), default="stub", show_default=True)
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--truth", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--min-score", type=float, default=0.0, show_default=True)
@click.option("--subset", type=int, default=None, help="evaluate a random subset of N images")
@click.option("--seed", type=int, default=None, help="seed for subset sampling")
@click.option("--parallelism", type=int, default=1, show_default=True)
@click.option("--per-image", is_flag=True, help="also report per-image averaged accuracy")
@click.option("--json-out", type=click.Path(dir_okay=False), default=None,
              help="write the machine-readable report here")
@_runtime_errors
def bench(backend, manifest, corpus, truth, min_score, subset, seed, parallelism,
          per_image, json_out):
    """Evaluate a detection backend over a corpus with ground truth."""
    backend_obj = StubBackend.from_file(manifest)
    report = run_benchmark(backend_obj, corpus, GroundTruth.from_file(truth),
                           min_score=min_score, parallelism=parallelism,
                           per_image=per_image, subset=subset, seed=seed)
    click.echo(report.render())
    click.echo("")
    click.echo(render_aggregate_table([report.table_row()]))
    if json_out:
        Path(json_out).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
        click.echo(f"wrote {json_out}")


@main.command()
@click.option("--log", "log_path", default=None)
@click.option("--session", "session_id", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--assets", "asset_root", default=None)
@_runtime_errors
def export(log_path, session_id, out_dir, asset_root):
    """Write a self-contained examination export for one session."""
    store = LogStore(_resolve(log_path, "SCENELAB_LOG", "scenelab-log.jsonl"), durable=False)
    try:
        entries = store.query(session_id=session_id)
    finally:
        store.close()
    if not entries:
        click.echo(f"error: no log entries for session {session_id!r}", err=True)
        sys.exit(1)
    opened = next((e for e in entries if e.action == "scene_open"), None)
    if opened is None:
        click.echo(f"error: session {session_id!r} never opened a scene", err=True)
        sys.exit(1)
    catalog = AssetCatalog(_resolve(asset_root, "SCENELAB_ASSETS", "assets"))
    scene = catalog.open_scene(opened.payload["scene_id"])
    export_examination(scene, entries, out_dir, session_id, TOOL_VERSION)
    click.echo(f"exported {len(entries)} entries to {out_dir}")


@main.command("replay")
@click.option("--export", "export_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@_runtime_errors
def replay_cmd(export_dir):
    """Rebuild an exported examination from its log and verify consistency."""
    scene, ex = load_examination(export_dir)
    replayed = replay(scene, ex.entries)
    click.echo(json.dumps(replayed.state_dict(), indent=2))
    ok, message = verify_examination(export_dir)
    if not ok:
        click.echo(message, err=True)
        sys.exit(1)
    click.echo("replay matches stored configuration")


@main.command("detect")
@click.option("--image", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--min-score", type=float, default=0.0, show_default=True)
@_runtime_errors
def detect_cmd(image, manifest, min_score):
    """Classify one image with the stub backend and print the detections."""
    outcome = run_detect(StubBackend.from_file(manifest), Path(image).read_bytes(), min_score)
    if not outcome.detections:
        click.echo("no detections", err=True)
        return
    for d in outcome.detections:
        x0, y0, x1, y1 = d.bbox
        click.echo(f"{d.class_name} {d.score:g} [{x0:g} {y0:g} {x1:g} {y1:g}]")
