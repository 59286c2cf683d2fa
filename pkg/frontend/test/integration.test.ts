// End-to-end: the viewer stack against a real examination server process
// (stub backend manifest) over an actual WebSocket. Skipped when the server
// package is not importable on this machine.

import { ChildProcess, spawn, spawnSync } from 'node:child_process';
import { createHash } from 'node:crypto';
import { mkdirSync, mkdtempSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import WebSocket from 'ws';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { parseObj } from '../src/obj';
import { SocketLike, WireClient } from '../src/protocol';
import { ExaminationSession } from '../src/session';
import { TransformDict, ViewerState } from '../src/state';
import { TETRA_OBJ_TEXT } from './helpers';

const PYTHON = 'python3';
const haveServer =
  spawnSync(PYTHON, ['-c', 'import scenelab, PIL'], { encoding: 'utf8' }).status === 0;
const maybe = haveServer ? describe : describe.skip;

function solidPngB64(r: number, g: number, b: number): string {
  const script =
    'import base64, io, sys\n' +
    'from PIL import Image\n' +
    'buf = io.BytesIO()\n' +
    `Image.new("RGB", (8, 8), (${r}, ${g}, ${b})).save(buf, "PNG")\n` +
    'sys.stdout.write(base64.b64encode(buf.getvalue()).decode())\n';
  const run = spawnSync(PYTHON, ['-c', script], { encoding: 'utf8' });
  if (run.status !== 0) throw new Error(`png helper failed: ${run.stderr}`);
  return run.stdout.trim();
}

function sha256B64(b64: string): string {
  return createHash('sha256').update(Buffer.from(b64, 'base64')).digest('hex');
}

maybe('viewer against a live server', () => {
  let root: string;
  let proc: ChildProcess;
  let ws: WebSocket;
  let wsPort = 0;
  let tvImage = '';
  let missImage = '';

  beforeAll(async () => {
    root = mkdtempSync(join(tmpdir(), 'viewer-it-'));
    const assets = join(root, 'assets');
    mkdirSync(join(assets, 'tetra'), { recursive: true });
    writeFileSync(join(assets, 'tetra', 'scene.obj'), TETRA_OBJ_TEXT);
    writeFileSync(
      join(assets, 'tetra', 'meta.json'),
      JSON.stringify({ name: 'Tetra', unit_scale: 1.0 }),
    );

    tvImage = solidPngB64(200, 30, 30);
    missImage = solidPngB64(30, 30, 200);
    const manifest: Record<string, unknown> = {};
    // default min_score is 0.5: both entries survive, 0.41 would not
    manifest[sha256B64(tvImage)] = [
      { class: 'tv', score: 0.989, bbox: [0.1, 0.1, 0.9, 0.9] },
      { class: 'laptop', score: 0.62, bbox: [0.2, 0.2, 0.5, 0.5] },
    ];
    const manifestPath = join(root, 'manifest.json');
    writeFileSync(manifestPath, JSON.stringify(manifest));
    mkdirSync(join(root, 'configs'));

    proc = spawn(
      PYTHON,
      [
        '-c', 'from scenelab.cli import main; main()',
        'serve', '--host', '127.0.0.1', '--port', '0', '--ws-port', '0',
        '--assets', assets,
        '--log', join(root, 'log.jsonl'),
        '--config-dir', join(root, 'configs'),
        '--manifest', manifestPath,
        '--no-fsync',
      ],
      { env: { ...process.env, PYTHONUNBUFFERED: '1' }, stdio: ['ignore', 'pipe', 'pipe'] },
    );
    const stderr: string[] = [];
    proc.stderr!.on('data', (chunk: Buffer) => stderr.push(String(chunk)));

    wsPort = await new Promise<number>((resolve, reject) => {
      let buffered = '';
      const timer = setTimeout(
        () => reject(new Error(`server never became ready\n${buffered}\n${stderr.join('')}`)),
        20000,
      );
      proc.stdout!.on('data', (chunk: Buffer) => {
        buffered += String(chunk);
        const m = buffered.match(/ws=127\.0\.0\.1:(\d+)\/ws/);
        if (m) {
          clearTimeout(timer);
          resolve(Number(m[1]));
        }
      });
      proc.on('exit', (code) =>
        reject(new Error(`server exited early (${code})\n${buffered}\n${stderr.join('')}`)),
      );
    });

    ws = new WebSocket(`ws://127.0.0.1:${wsPort}/ws`);
    await new Promise<void>((resolve, reject) => {
      ws.once('open', () => resolve());
      ws.once('error', (err) => reject(err));
    });
  }, 30000);

  afterAll(() => {
    try {
      ws?.close();
    } catch {
      /* already closed */
    }
    proc?.kill('SIGKILL');
    rmSync(root, { recursive: true, force: true });
  });

  it('runs the scripted session over the wire and replays it', async () => {
    const state = new ViewerState();
    const client = new WireClient(ws as unknown as SocketLike, 'it');
    const session = new ExaminationSession(client, state);

    // catalog + open
    const scenes = await session.listScenes();
    expect(scenes).toEqual([
      { scene_id: 'tetra', file: 'tetra/scene.obj', name: 'Tetra', unit_scale: 1.0 },
    ]);
    const opened = await session.open('tetra');
    const summary = (opened.body.scene as { objects: Array<Record<string, unknown>> }).objects[0];
    const oid = summary.id as string;
    expect(oid).toBe('tetra/tetra/0');

    // the asset the viewer renders parses to the same mesh the server opened
    const text = await session.fetchAsset('tetra/scene.obj');
    const parsed = parseObj(text, 'tetra', scenes[0].unit_scale);
    expect(parsed[0].id).toBe(oid);
    expect(parsed[0].positions.length / 3).toBe(summary.vertex_count);
    expect(parsed[0].triangles.length / 3).toBe(summary.triangle_count);

    // select -> expand
    expect(await session.select(oid, [0])).toBe(1);
    expect(await session.expand()).toBe(4);

    // classify -> label overlay from the top detection
    const detections = await session.classifyAndLabel(oid, tvImage);
    expect(detections.map((d) => d.class)).toEqual(['tv', 'laptop']);
    expect(state.labels.get(oid)).toEqual({ objectId: oid, label: 'tv', score: 0.989 });
    expect(await session.classifyAndLabel(oid, missImage)).toEqual([]);

    // measure
    expect(await session.measure([0, 0, 0], [3, 4, 0])).toBe('5.000 m');

    // move with ghost
    const moved: TransformDict = {
      translation: [0.25, -1.5, 9.0], rotation: [1, 0, 0, 0], scale: [1, 1, 1],
    };
    await session.grab(oid);
    expect(state.ghostVisible(oid)).toBe(true);
    await session.moveTo(oid, moved);
    await session.release(oid);
    expect(state.ghostVisible(oid)).toBe(true);
    expect(state.poses.get(oid)).toEqual(moved);

    // the log panel shows exactly what the service recorded, in order
    const entries = await session.refreshLog();
    expect(entries.map((e) => e.action)).toEqual([
      'scene_open', 'select', 'expand',
      'classify_request', 'classify_result', 'label',
      'classify_request', 'classify_result',
      'measure', 'grab', 'move', 'release',
    ]);
    expect(entries.map((e) => e.seq)).toEqual(entries.map((_, i) => i + 1));
    expect(state.logLines()).toHaveLength(entries.length);
    const labelEntry = entries.find((e) => e.action === 'label')!;
    expect(labelEntry.payload).toMatchObject({ object_id: oid, label: 'tv', score: 0.989 });
    const measureEntry = entries.find((e) => e.action === 'measure')!;
    expect(measureEntry.payload).toMatchObject({ distance: 5.0 });

    // reload: fresh state + replay reproduces every overlay
    const fresh = new ViewerState();
    fresh.openScene('tetra', state.sessionId!, [
      {
        id: oid,
        current: summary.current as TransformDict,
        original: summary.original as TransformDict,
        label: summary.label as string | null,
      },
    ]);
    fresh.replayOverlays(entries);
    expect(fresh.overlaySnapshot()).toEqual(state.overlaySnapshot());
    expect(fresh.ghostVisible(oid)).toBe(true);
    expect(fresh.measurements[0].text).toBe('5.000 m');

    // restore drops the ghost everywhere
    await session.restore(oid);
    fresh.replayOverlays(await session.refreshLog());
    expect(fresh.overlaySnapshot()).toEqual(state.overlaySnapshot());
    expect(fresh.ghostVisible(oid)).toBe(false);
    expect(state.ghostVisible(oid)).toBe(false);
  }, 30000);

  it('maps service failures to typed errors', async () => {
    const ws2 = new WebSocket(`ws://127.0.0.1:${wsPort}/ws`);
    await new Promise<void>((resolve, reject) => {
      ws2.once('open', () => resolve());
      ws2.once('error', (err) => reject(err));
    });
    const client = new WireClient(ws2 as unknown as SocketLike, 'it2');
    const session = new ExaminationSession(client, new ViewerState());
    await expect(session.open('missing')).rejects.toMatchObject({ code: 'unknown_scene' });
    await expect(session.expand()).rejects.toMatchObject({ code: 'no_session' });
    // distances never need a scene
    await expect(session.measure([0, 0, 0], [0, 0, 1])).resolves.toBe('1.000 m');
    await session.open('tetra');
    await expect(session.expand()).rejects.toMatchObject({ code: 'empty_selection' });
    ws2.close();
  }, 15000);
});
