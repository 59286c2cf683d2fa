// In-memory socket and a wire-faithful fake examination server for tests.

import { Envelope, parseEnvelope, serializeEnvelope, SocketLike } from '../src/protocol';

export class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onopen: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  peer: ((text: string) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
    this.peer?.(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  /** Deliver a server->client message. */
  receive(text: string): void {
    this.onmessage?.({ data: text });
  }

  receiveEnvelope(env: Envelope): void {
    this.receive(serializeEnvelope(env));
  }

  lastSent(): Envelope {
    return parseEnvelope(this.sent[this.sent.length - 1]);
  }
}

const TETRA_NEIGHBORS: Record<number, number[]> = {
  0: [1, 2, 3], 1: [0, 2, 3], 2: [0, 1, 3], 3: [0, 1, 2],
};

export const TETRA_OBJ_TEXT = `o tetra
v 0 0 0
v 1 0 0
v 0 1 0
v 0 0 1
f 1 3 2
f 1 2 4
f 1 4 3
f 2 3 4
`;

const IDENTITY = {
  translation: [0, 0, 0],
  rotation: [1, 0, 0, 0],
  scale: [1, 1, 1],
};

interface FakeEntry {
  seq: number;
  ts: number;
  session: string;
  action: string;
  payload: Record<string, unknown>;
}

/**
 * Implements the envelope contract the way the real service does, far enough
 * for a scripted viewer session: tetra scene, selection ops with real
 * adjacency, manifest-style classify, logbook with sequence numbers.
 */
export class FakeExamServer {
  readonly entries: FakeEntry[] = [];
  readonly objectId = 'tetra/tetra/0';
  /** exact base64 image string -> detections */
  manifest = new Map<string, Array<{ class: string; score: number; bbox: number[] }>>();
  private seq = 0;
  private sessionId = 's-fake01';
  private selection: number[] | null = null;
  private pose: Record<string, unknown> = IDENTITY;
  private label: string | null = null;
  private measurements: Array<Record<string, unknown>> = [];

  private log(action: string, payload: Record<string, unknown>): void {
    this.seq += 1;
    this.entries.push({ seq: this.seq, ts: 1700000000000 + this.seq, session: this.sessionId, action, payload });
  }

  private reply: ((text: string) => void) | null = null;

  bind(deliver: (text: string) => void): void {
    this.reply = deliver;
  }

  handle(env: Envelope): void {
    const respond = (type: string, body: Record<string, unknown>) => {
      const out = serializeEnvelope({ v: 1, id: env.id, type, body });
      this.reply?.(out);
    };
    const fail = (code: string, message: string) =>
      respond('error', { code, message });

    const b = env.body as Record<string, any>;
    switch (env.type) {
      case 'ping':
        respond('ping_result', { session_id: this.sessionId });
        return;
      case 'list_scenes':
        respond('list_scenes_result', {
          scenes: [{ scene_id: 'tetra', file: 'tetra/scene.obj', name: 'Tetra', unit_scale: 1.0 }],
        });
        return;
      case 'get_asset': {
        const data = typeof btoa === 'function'
          ? btoa(TETRA_OBJ_TEXT)
          : Buffer.from(TETRA_OBJ_TEXT, 'utf8').toString('base64');
        respond('get_asset_result', { path: b.path, size: TETRA_OBJ_TEXT.length, data });
        return;
      }
      case 'open_scene':
        if (b.scene_id !== 'tetra') {
          fail('unknown_scene', `no scene ${b.scene_id}`);
          return;
        }
        this.log('scene_open', { scene_id: 'tetra' });
        respond('open_scene_result', {
          session_id: this.sessionId,
          scene: {
            scene_id: 'tetra',
            unit_scale: 1.0,
            objects: [{
              id: this.objectId, name: 'tetra', vertex_count: 4, triangle_count: 4,
              current: this.pose, original: IDENTITY, label: this.label,
            }],
          },
        });
        return;
      case 'select':
        this.selection = [...(b.indices as number[])];
        this.log('select', { object_id: b.object_id, indices: this.selection });
        respond('select_result', { object_id: b.object_id, indices: this.selection, count: this.selection.length });
        return;
      case 'expand': {
        if (!this.selection) {
          fail('empty_selection', 'no active selection to expand');
          return;
        }
        const grown = new Set(this.selection);
        for (const v of this.selection) for (const u of TETRA_NEIGHBORS[v]) grown.add(u);
        this.selection = [...grown].sort((x, y) => x - y);
        this.log('expand', { object_id: this.objectId, count: this.selection.length });
        respond('expand_result', { object_id: this.objectId, indices: this.selection, count: this.selection.length });
        return;
      }
      case 'shrink': {
        if (!this.selection) {
          fail('empty_selection', 'no active selection to shrink');
          return;
        }
        const selected = new Set(this.selection);
        this.selection = this.selection.filter((v) => TETRA_NEIGHBORS[v].every((u) => selected.has(u)));
        this.log('shrink', { object_id: this.objectId, count: this.selection.length });
        respond('shrink_result', { object_id: this.objectId, indices: this.selection, count: this.selection.length });
        return;
      }
      case 'classify': {
        const detections = this.manifest.get(String(b.image)) ?? [];
        this.log('classify_request', { object_id: b.object_id ?? null, sha256: 'fake', bytes: String(b.image).length });
        this.log('classify_result', { backend_id: 'stub', latency_ms: 1, detections });
        respond('classify_result', { detections, backend_id: 'stub', latency_ms: 1 });
        return;
      }
      case 'label':
        this.label = String(b.label);
        {
          const event: Record<string, unknown> = { event: 'label', object_id: b.object_id, label: this.label };
          if (b.score !== undefined) event.score = b.score;
          this.log('label', event);
          respond('label_result', event);
        }
        return;
      case 'measure': {
        const [ax, ay, az] = b.a as number[];
        const [bx, by, bz] = b.b as number[];
        const distance = Math.hypot(bx - ax, by - ay, bz - az);
        this.measurements.push({ a: b.a, b: b.b, distance });
        this.log('measure', { a: b.a, b: b.b, distance });
        respond('measure_result', { distance });
        return;
      }
      case 'grab':
        this.log('grab', { object_id: b.object_id });
        respond('grab_result', { object_id: b.object_id });
        return;
      case 'release':
        this.log('release', { object_id: b.object_id });
        respond('release_result', { object_id: b.object_id });
        return;
      case 'set_transform':
        this.pose = b.transform;
        this.log('move', { object_id: b.object_id, transform: b.transform });
        respond('set_transform_result', { object_id: b.object_id, transform: b.transform });
        return;
      case 'restore_original':
        this.pose = IDENTITY;
        this.log('restore', { object_id: b.object_id });
        respond('restore_original_result', { object_id: b.object_id, transform: IDENTITY });
        return;
      case 'save_config':
        this.log('save_config', { name: b.name });
        respond('save_config_result', {
          config: {
            scene_id: 'tetra',
            objects: [{ id: this.objectId, transform: this.pose, label: this.label }],
            measurements: this.measurements,
            created_at: 0,
            name: b.name,
          },
        });
        return;
      case 'log_query': {
        const wanted = this.entries.filter((e) => !b.session_id || e.session === b.session_id);
        respond('log_query_result', { entries: wanted });
        return;
      }
      default:
        fail('unknown_type', `unknown request type '${env.type}'`);
    }
  }
}

/** A client socket whose messages are answered by the fake server. */
export function connectedPair(): { socket: FakeSocket; server: FakeExamServer } {
  const socket = new FakeSocket();
  const server = new FakeExamServer();
  server.bind((text) => socket.receive(text));
  socket.peer = (text) => server.handle(parseEnvelope(text));
  return { socket, server };
}
