// Application wiring: socket lifecycle with reconnect, toolbar, log panel.

import * as THREE from 'three';
import { backoffDelays, ServerError, WireClient } from './protocol';
import { parseObj, ParsedObject } from './obj';
import { ExaminationSession, SceneListing } from './session';
import { SceneView } from './scene3d';
import { TransformDict, ViewerState } from './state';

type Tool = 'orbit' | 'brush' | 'move' | 'measure';

const app = document.getElementById('app')!;
app.innerHTML = `
  <div id="banner" hidden>connection lost — reconnecting…</div>
  <header>
    <select id="scene-pick"><option value="">choose a scene…</option></select>
    <span class="sep"></span>
    <button id="tool-orbit" class="tool active">orbit</button>
    <button id="tool-brush" class="tool">select</button>
    <button id="tool-move" class="tool">move</button>
    <button id="tool-measure" class="tool">measure</button>
    <span class="sep"></span>
    <button id="expand" disabled>expand</button>
    <button id="shrink" disabled>shrink</button>
    <button id="classify" disabled>classify</button>
    <button id="restore" disabled>return to origin</button>
    <button id="save" disabled>save config</button>
  </header>
  <main>
    <div id="view"></div>
    <aside>
      <h2>examination log</h2>
      <ul id="log"></ul>
    </aside>
  </main>
  <div id="toasts"></div>
`;

const view = new SceneView(document.getElementById('view')!);
const state = new ViewerState();
let session: ExaminationSession | null = null;
let parsedObjects: ParsedObject[] = [];
let tool: Tool = 'orbit';
let connected = false;

function wsUrl(): string {
  // served by the examination server itself; fall back to the default port
  // when developing from a separately hosted page
  const host = location.host || '127.0.0.1:7048';
  if (location.protocol.startsWith('http') && location.port) {
    return `ws://${host}/ws`;
  }
  return `ws://${location.hostname || '127.0.0.1'}:7048/ws`;
}

function toast(text: string, kind: 'error' | 'info' = 'error'): void {
  const div = document.createElement('div');
  div.className = `toast ${kind}`;
  div.textContent = text;
  document.getElementById('toasts')!.appendChild(div);
  setTimeout(() => div.remove(), 4000);
}

function setConnected(up: boolean): void {
  connected = up;
  (document.getElementById('banner') as HTMLElement).hidden = up;
}

function connect(attempt = 0): void {
  const socket = new WebSocket(wsUrl());
  socket.onopen = () => {
    setConnected(true);
    if (!session) {
      const client = new WireClient(socket as unknown as any);
      client.onStrayError = (code, message) => toast(`${code}: ${message}`);
      client.onStatus = setConnected;
      session = new ExaminationSession(client, state);
      void populateScenes();
    } else {
      session.client.reconnect(socket as unknown as any);
      // sessions are per-connection: reopen the scene to resume examining
      if (state.sceneId) void openScene(state.sceneId);
    }
  };
  socket.onclose = () => {
    setConnected(false);
    setTimeout(() => connect(attempt + 1), backoffDelays()(attempt));
  };
}

async function populateScenes(): Promise<void> {
  if (!session) return;
  try {
    const scenes = await session.listScenes();
    const pick = document.getElementById('scene-pick') as HTMLSelectElement;
    for (const s of scenes) {
      const opt = document.createElement('option');
      opt.value = s.scene_id;
      opt.textContent = `${s.name} (${s.scene_id})`;
      opt.dataset.listing = JSON.stringify(s);
      pick.appendChild(opt);
    }
  } catch (err) {
    toast(String(err));
  }
}

async function openScene(sceneId: string): Promise<void> {
  if (!session) return;
  const pick = document.getElementById('scene-pick') as HTMLSelectElement;
  const opt = [...pick.options].find((o) => o.value === sceneId);
  const listing: SceneListing = opt?.dataset.listing
    ? JSON.parse(opt.dataset.listing)
    : { scene_id: sceneId, file: `${sceneId}/scene.obj`, name: sceneId, unit_scale: 1.0 };
  try {
    await session.open(sceneId);
    // listing.file is already relative to the asset root
    const objText = await session.fetchAsset(listing.file);
    parsedObjects = parseObj(objText, sceneId, listing.unit_scale);
    view.loadObjects(parsedObjects, state.poses, state.originals);
    refreshOverlays();
    for (const id of ['expand', 'shrink', 'classify', 'restore', 'save']) {
      (document.getElementById(id) as HTMLButtonElement).disabled = false;
    }
    await refreshLogPanel();
  } catch (err) {
    toast(String(err));
  }
}

function refreshOverlays(): void {
  view.setHighlight(state.selection?.objectId ?? null, state.selection?.indices ?? new Set());
  for (const [id, pose] of state.poses) {
    view.setPose(id, pose);
    view.setGhostVisible(id, state.ghostVisible(id));
  }
  view.clearMeasureMarkers();
  for (const m of state.measurements) view.addMeasureMarker(m.a, m.b, m.text);
}

async function refreshLogPanel(): Promise<void> {
  if (!session) return;
  await session.refreshLog();
  const ul = document.getElementById('log')!;
  ul.innerHTML = '';
  for (const line of state.logLines()) {
    const li = document.createElement('li');
    li.textContent = line;
    ul.appendChild(li);
  }
  ul.scrollTop = ul.scrollHeight;
}

function surface(err: unknown): void {
  if (err instanceof ServerError) toast(`${err.code}: ${err.message}`);
  else toast(String(err));
}

async function act(fn: () => Promise<unknown>): Promise<void> {
  if (!session || !connected) {
    toast('not connected', 'info');
    return;
  }
  try {
    await fn();
    refreshOverlays();
    await refreshLogPanel();
  } catch (err) {
    surface(err);
  }
}

// --- toolbar -----------------------------------------------------------------

for (const t of ['orbit', 'brush', 'move', 'measure'] as Tool[]) {
  document.getElementById(`tool-${t}`)!.addEventListener('click', () => {
    tool = t;
    view.controls.enabled = t === 'orbit';
    document.querySelectorAll('.tool').forEach((b) => b.classList.remove('active'));
    document.getElementById(`tool-${t}`)!.classList.add('active');
  });
}

document.getElementById('scene-pick')!.addEventListener('change', (ev) => {
  const sceneId = (ev.target as HTMLSelectElement).value;
  if (sceneId) void openScene(sceneId);
});

document.getElementById('expand')!.addEventListener('click', () =>
  act(async () => session!.expand()));
document.getElementById('shrink')!.addEventListener('click', () =>
  act(async () => session!.shrink()));

document.getElementById('classify')!.addEventListener('click', () =>
  act(async () => {
    if (!state.selection || state.selection.indices.size === 0) {
      toast('select a region first', 'info');
      return;
    }
    const detections = await session!.classifyAndLabel(
      state.selection.objectId, view.captureSnapshot());
    if (detections.length === 0) toast('no detection', 'info');
    else toast(`${detections[0].class} ${(detections[0].score * 100).toFixed(1)}%`, 'info');
  }));

document.getElementById('restore')!.addEventListener('click', () =>
  act(async () => {
    const target = state.selection?.objectId ?? parsedObjects[0]?.id;
    if (target) await session!.restore(target);
  }));

document.getElementById('save')!.addEventListener('click', () =>
  act(async () => {
    const name = prompt('configuration name', 'examination')?.trim();
    if (name) await session!.saveConfig(name, true);
  }));

// --- pointer interactions ----------------------------------------------------

const viewEl = document.getElementById('view')!;
let brushing = false;
let brushAccum: { objectId: string; indices: Set<number> } | null = null;
let dragging: { objectId: string; anchor: THREE.Vector3 } | null = null;
let measureFirst: [number, number, number] | null = null;

viewEl.addEventListener('pointerdown', (ev) => {
  if (tool === 'brush') {
    brushing = true;
    brushAccum = null;
    brushOver(ev);
  } else if (tool === 'move') {
    const objectId = view.pickObject(ev.clientX, ev.clientY);
    if (!objectId) return;
    if (!connected) {
      toast('not connected', 'info');
      return;
    }
    const anchor = view.meshPosition(objectId);
    if (!anchor) return;
    dragging = { objectId, anchor };
    view.setGhostVisible(objectId, true);
    void session?.grab(objectId).catch(surface);
  }
});

viewEl.addEventListener('pointermove', (ev) => {
  if (tool === 'brush' && brushing) {
    brushOver(ev);
  } else if (tool === 'move' && dragging) {
    const p = view.dragPoint(ev.clientX, ev.clientY, dragging.anchor);
    if (p) view.moveMeshTo(dragging.objectId, p);
  }
});

viewEl.addEventListener('pointerup', (ev) => {
  if (tool === 'brush' && brushing) {
    brushing = false;
    if (brushAccum && brushAccum.indices.size > 0) {
      const { objectId, indices } = brushAccum;
      void act(async () => session!.select(objectId, [...indices]));
    }
  } else if (tool === 'move' && dragging) {
    const { objectId } = dragging;
    dragging = null;
    const p = view.meshPosition(objectId);
    const prev = state.poses.get(objectId);
    if (!p || !prev) return;
    const transform: TransformDict = {
      translation: [p.x, p.y, p.z],
      rotation: prev.rotation,
      scale: prev.scale,
    };
    void act(async () => {
      await session!.moveTo(objectId, transform);
      await session!.release(objectId);
    });
  } else if (tool === 'measure') {
    const p = view.pickPoint(ev.clientX, ev.clientY);
    if (!p) return;
    if (!measureFirst) {
      measureFirst = p;
      toast('first endpoint set', 'info');
    } else {
      const a = measureFirst;
      measureFirst = null;
      void act(async () => {
        const text = await session!.measure(a, p);
        toast(text, 'info');
      });
    }
  }
});

viewEl.addEventListener('keydown', (ev) => {
  if (ev.key === 'Escape') measureFirst = null; // single click then cancel: nothing sent
});

function brushOver(ev: PointerEvent): void {
  const hit = view.pickFaceVertices(ev.clientX, ev.clientY);
  if (!hit) return;
  if (!brushAccum || brushAccum.objectId !== hit.objectId) {
    brushAccum = { objectId: hit.objectId, indices: new Set() };
  }
  for (const i of hit.indices) brushAccum.indices.add(i);
  view.setHighlight(brushAccum.objectId, brushAccum.indices); // local preview
}

connect();
