// Viewer-side examination state. Nothing here is authoritative: every label,
// measurement and pose shown comes from a server response or a log entry,
// and replaying the session log must rebuild the identical overlay set.

export interface TransformDict {
  translation: [number, number, number];
  rotation: [number, number, number, number]; // w, x, y, z
  scale: [number, number, number];
}

export const IDENTITY_TRANSFORM: TransformDict = {
  translation: [0, 0, 0],
  rotation: [1, 0, 0, 0],
  scale: [1, 1, 1],
};

export interface LogEntryDict {
  seq: number;
  ts: number;
  session: string;
  action: string;
  payload: Record<string, unknown>;
}

export interface LabelOverlay {
  objectId: string;
  label: string;
  score?: number;
}

export interface MeasureOverlay {
  a: [number, number, number];
  b: [number, number, number];
  distance: number;
  text: string;
}

export function formatDistance(meters: number): string {
  return `${meters.toFixed(3)} m`;
}

function sameTransform(a: TransformDict, b: TransformDict): boolean {
  return JSON.stringify(a) === JSON.stringify(b);
}

export class ViewerState {
  sceneId: string | null = null;
  sessionId: string | null = null;
  /** server-confirmed selection, one object at a time */
  selection: { objectId: string; indices: Set<number> } | null = null;
  labels = new Map<string, LabelOverlay>();
  measurements: MeasureOverlay[] = [];
  /** current pose per object id, as last confirmed by the server */
  poses = new Map<string, TransformDict>();
  originals = new Map<string, TransformDict>();
  grabbed = new Set<string>();
  logTail: LogEntryDict[] = [];

  openScene(sceneId: string, sessionId: string,
            objects: Array<{ id: string; current: TransformDict; original: TransformDict; label: string | null }>): void {
    this.sceneId = sceneId;
    this.sessionId = sessionId;
    this.selection = null;
    this.labels.clear();
    this.measurements = [];
    this.poses.clear();
    this.originals.clear();
    this.grabbed.clear();
    for (const o of objects) {
      this.poses.set(o.id, o.current);
      this.originals.set(o.id, o.original);
      if (o.label) this.labels.set(o.id, { objectId: o.id, label: o.label });
    }
  }

  setSelection(objectId: string, indices: number[]): void {
    this.selection = { objectId, indices: new Set(indices) };
  }

  clearSelection(): void {
    this.selection = null;
  }

  applyLabel(objectId: string, label: string, score?: number): void {
    this.labels.set(objectId, { objectId, label, score });
  }

  addMeasurement(a: [number, number, number], b: [number, number, number], distance: number): void {
    this.measurements.push({ a, b, distance, text: formatDistance(distance) });
  }

  applyMove(objectId: string, transform: TransformDict): void {
    this.poses.set(objectId, transform);
  }

  applyRestore(objectId: string): void {
    const original = this.originals.get(objectId);
    if (original) this.poses.set(objectId, original);
  }

  grab(objectId: string): void {
    this.grabbed.add(objectId);
  }

  release(objectId: string): void {
    this.grabbed.delete(objectId);
  }

  /**
   * The ghost clone stays at the original pose whenever the object has been
   * moved away from it (or is mid-grab), and disappears once they coincide.
   */
  ghostVisible(objectId: string): boolean {
    const pose = this.poses.get(objectId);
    const original = this.originals.get(objectId);
    if (!pose || !original) return false;
    if (this.grabbed.has(objectId)) return true;
    return !sameTransform(pose, original);
  }

  setLogTail(entries: LogEntryDict[]): void {
    this.logTail = entries;
  }

  /** One display line per log entry, newest last. */
  logLines(): string[] {
    return this.logTail.map((e) => `#${e.seq} ${e.action} ${compactPayload(e.payload)}`);
  }

  /**
   * Rebuild overlays from a session log: the server is the single source of
   * truth, so a fresh page that replays the log must show the same state.
   */
  replayOverlays(entries: LogEntryDict[]): void {
    this.labels.clear();
    this.measurements = [];
    this.grabbed.clear();
    for (const [id, original] of this.originals) this.poses.set(id, original);
    for (const e of entries) {
      const p = e.payload as Record<string, any>;
      switch (e.action) {
        case 'move':
          this.applyMove(String(p.object_id), p.transform as TransformDict);
          break;
        case 'restore':
          this.applyRestore(String(p.object_id));
          break;
        case 'label':
          if (p.event === 'no_detection') break;
          this.applyLabel(String(p.object_id), String(p.label),
                          typeof p.score === 'number' ? p.score : undefined);
          break;
        case 'measure':
          this.addMeasurement(p.a as [number, number, number],
                              p.b as [number, number, number], Number(p.distance));
          break;
        default:
          // selection, grabs, classify traffic: no overlay effect
          break;
      }
    }
    this.setLogTail(entries);
  }

  /** Everything a redraw needs to compare two states for equality in tests. */
  overlaySnapshot(): Record<string, unknown> {
    return {
      labels: [...this.labels.values()].sort((x, y) => x.objectId.localeCompare(y.objectId)),
      measurements: this.measurements,
      poses: Object.fromEntries([...this.poses.entries()].sort()),
    };
  }
}

function compactPayload(payload: Record<string, unknown>): string {
  const text = JSON.stringify(payload);
  return text.length > 90 ? `${text.slice(0, 87)}...` : text;
}
