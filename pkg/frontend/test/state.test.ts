import { describe, expect, it } from 'vitest';

import {
  formatDistance,
  IDENTITY_TRANSFORM,
  LogEntryDict,
  TransformDict,
  ViewerState,
} from '../src/state';

const OID = 'tetra/tetra/0';

function openedState(): ViewerState {
  const state = new ViewerState();
  state.openScene('tetra', 's-1', [
    { id: OID, current: IDENTITY_TRANSFORM, original: IDENTITY_TRANSFORM, label: null },
  ]);
  return state;
}

const MOVED: TransformDict = {
  translation: [0.25, -1.5, 9.0],
  rotation: [1, 0, 0, 0],
  scale: [1, 1, 1],
};

describe('formatDistance', () => {
  it('renders metres to three decimals', () => {
    expect(formatDistance(5)).toBe('5.000 m');
    expect(formatDistance(1.23456)).toBe('1.235 m');
    expect(formatDistance(0)).toBe('0.000 m');
  });
});

describe('ghost visibility', () => {
  it('tracks the grab/move/release/restore lifecycle', () => {
    const state = openedState();
    expect(state.ghostVisible(OID)).toBe(false);

    state.grab(OID);
    expect(state.ghostVisible(OID)).toBe(true); // mid-grab, even at original

    state.applyMove(OID, MOVED);
    state.release(OID);
    expect(state.ghostVisible(OID)).toBe(true); // displaced from original

    state.applyRestore(OID);
    expect(state.ghostVisible(OID)).toBe(false);
  });

  it('is false for unknown objects', () => {
    expect(openedState().ghostVisible('nope')).toBe(false);
  });
});

describe('log panel lines', () => {
  it('formats one line per entry and truncates long payloads', () => {
    const state = openedState();
    state.setLogTail([
      { seq: 3, ts: 1, session: 's-1', action: 'measure', payload: { distance: 5.0 } },
      { seq: 4, ts: 2, session: 's-1', action: 'label', payload: { note: 'x'.repeat(200) } },
    ]);
    const lines = state.logLines();
    expect(lines[0]).toBe('#3 measure {"distance":5}');
    expect(lines[1].startsWith('#4 label {"note":')).toBe(true);
    expect(lines[1].endsWith('...')).toBe(true);
    expect(lines[1].length).toBeLessThanOrEqual(90 + '#4 label '.length);
  });
});

describe('replayOverlays', () => {
  function scripted(): { live: ViewerState; entries: LogEntryDict[] } {
    const live = openedState();
    const entries: LogEntryDict[] = [];
    let seq = 0;
    const log = (action: string, payload: Record<string, unknown>) => {
      seq += 1;
      entries.push({ seq, ts: seq, session: 's-1', action, payload });
    };

    log('scene_open', { scene_id: 'tetra' });
    live.setSelection(OID, [0, 1]);
    log('select', { object_id: OID, indices: [0, 1] });
    live.applyLabel(OID, 'tv', 0.989);
    log('label', { event: 'label', object_id: OID, label: 'tv', score: 0.989 });
    live.addMeasurement([0, 0, 0], [3, 4, 0], 5.0);
    log('measure', { a: [0, 0, 0], b: [3, 4, 0], distance: 5.0 });
    live.grab(OID);
    log('grab', { object_id: OID });
    live.applyMove(OID, MOVED);
    log('move', { object_id: OID, transform: MOVED });
    live.release(OID);
    log('release', { object_id: OID });
    live.setLogTail(entries);
    return { live, entries };
  }

  it('rebuilds the identical overlay set on a fresh page', () => {
    const { live, entries } = scripted();
    const fresh = openedState();
    fresh.replayOverlays(entries);
    expect(fresh.overlaySnapshot()).toEqual(live.overlaySnapshot());
    expect(fresh.logLines()).toEqual(live.logLines());
    expect(fresh.ghostVisible(OID)).toBe(true);
  });

  it('replays restore back to the original pose', () => {
    const { live, entries } = scripted();
    live.applyRestore(OID);
    entries.push({ seq: 99, ts: 99, session: 's-1', action: 'restore', payload: { object_id: OID } });

    const fresh = openedState();
    fresh.replayOverlays(entries);
    expect(fresh.overlaySnapshot()).toEqual(live.overlaySnapshot());
    expect(fresh.ghostVisible(OID)).toBe(false);
  });

  it('ignores no_detection label events', () => {
    const fresh = openedState();
    fresh.replayOverlays([
      { seq: 1, ts: 1, session: 's-1', action: 'label', payload: { event: 'no_detection', object_id: OID } },
    ]);
    expect(fresh.labels.size).toBe(0);
  });

  it('is idempotent', () => {
    const { entries } = scripted();
    const fresh = openedState();
    fresh.replayOverlays(entries);
    const once = fresh.overlaySnapshot();
    fresh.replayOverlays(entries);
    expect(fresh.overlaySnapshot()).toEqual(once);
  });
});
