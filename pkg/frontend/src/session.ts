// High-level examination verbs: each user action maps to exactly one
// protocol request (double-clicks are absorbed by requestOnce), and state is
// only updated from the server's reply, never optimistically.

import { Envelope, WireClient } from './protocol';
import { LogEntryDict, TransformDict, ViewerState } from './state';

export interface SceneListing {
  scene_id: string;
  file: string;
  name: string;
  unit_scale: number;
}

export interface DetectionDict {
  class: string;
  score: number;
  bbox: [number, number, number, number];
}

export class ExaminationSession {
  readonly client: WireClient;
  readonly state: ViewerState;

  constructor(client: WireClient, state: ViewerState) {
    this.client = client;
    this.state = state;
  }

  async listScenes(): Promise<SceneListing[]> {
    const resp = await this.client.request('list_scenes');
    return resp.body.scenes as SceneListing[];
  }

  async fetchAsset(path: string): Promise<string> {
    const resp = await this.client.request('get_asset', { path });
    return atob(resp.body.data as string);
  }

  async open(sceneId: string): Promise<Envelope> {
    const resp = await this.client.request('open_scene', { scene_id: sceneId });
    const scene = resp.body.scene as {
      scene_id: string;
      objects: Array<{ id: string; current: TransformDict; original: TransformDict; label: string | null }>;
    };
    this.state.openScene(scene.scene_id, resp.body.session_id as string, scene.objects);
    return resp;
  }

  async select(objectId: string, indices: number[]): Promise<number> {
    const resp = await this.client.request('select', { object_id: objectId, indices });
    this.state.setSelection(objectId, resp.body.indices as number[]);
    return resp.body.count as number;
  }

  async expand(): Promise<number> {
    const resp = await this.client.requestOnce('expand', 'expand');
    this.state.setSelection(resp.body.object_id as string, resp.body.indices as number[]);
    return resp.body.count as number;
  }

  async shrink(): Promise<number> {
    const resp = await this.client.requestOnce('shrink', 'shrink');
    this.state.setSelection(resp.body.object_id as string, resp.body.indices as number[]);
    return resp.body.count as number;
  }

  /**
   * Classify a snapshot of the selection; when the backend finds something,
   * label the object with the top detection and overlay it.
   */
  async classifyAndLabel(objectId: string, imageB64: string, minScore?: number): Promise<DetectionDict[]> {
    const body: Record<string, unknown> = { image: imageB64, object_id: objectId };
    if (minScore !== undefined) body.min_score = minScore;
    const resp = await this.client.requestOnce('classify', 'classify', body);
    const detections = resp.body.detections as DetectionDict[];
    if (detections.length > 0) {
      const top = detections[0]; // server orders by score, best first
      await this.label(objectId, top.class, top.score);
    }
    return detections;
  }

  async label(objectId: string, label: string, score?: number): Promise<void> {
    const body: Record<string, unknown> = { object_id: objectId, label };
    if (score !== undefined) body.score = score;
    await this.client.request('label', body);
    this.state.applyLabel(objectId, label, score);
  }

  async measure(a: [number, number, number], b: [number, number, number]): Promise<string> {
    const resp = await this.client.request('measure', { a, b });
    const distance = resp.body.distance as number;
    this.state.addMeasurement(a, b, distance);
    return this.state.measurements[this.state.measurements.length - 1].text;
  }

  async grab(objectId: string): Promise<void> {
    await this.client.requestOnce(`grab:${objectId}`, 'grab', { object_id: objectId });
    this.state.grab(objectId);
  }

  /** Single set_transform on release, per the one-message-per-action rule. */
  async moveTo(objectId: string, transform: TransformDict): Promise<void> {
    const resp = await this.client.request('set_transform', { object_id: objectId, transform });
    this.state.applyMove(objectId, (resp.body.transform as TransformDict) ?? transform);
  }

  async release(objectId: string): Promise<void> {
    await this.client.requestOnce(`release:${objectId}`, 'release', { object_id: objectId });
    this.state.release(objectId);
  }

  async restore(objectId: string): Promise<void> {
    await this.client.requestOnce(`restore:${objectId}`, 'restore_original', { object_id: objectId });
    this.state.applyRestore(objectId);
  }

  async saveConfig(name: string, overwrite = false): Promise<Record<string, unknown>> {
    const resp = await this.client.requestOnce('save', 'save_config', { name, overwrite });
    return resp.body.config as Record<string, unknown>;
  }

  async refreshLog(): Promise<LogEntryDict[]> {
    if (!this.state.sessionId) return [];
    const resp = await this.client.request('log_query', { session_id: this.state.sessionId });
    const entries = resp.body.entries as LogEntryDict[];
    this.state.setLogTail(entries);
    return entries;
  }
}
