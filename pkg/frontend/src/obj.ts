// ASCII OBJ importer matching the service's group semantics: v/f/g/o lines,
// slash-style face corners, global 1-based (or negative) vertex indices
// compacted per group in first-encounter order, polygons fan-triangulated.
// Object ids are `<sceneId>/<group>/<ordinal>` with a per-name ordinal.

export interface ParsedObject {
  id: string;
  name: string;
  /** xyz triples, already multiplied by unitScale */
  positions: Float32Array;
  /** local vertex index triples */
  triangles: Uint32Array;
}

interface Group {
  name: string;
  vmap: Map<number, number>;
  verts: number[];
  tris: number[];
}

export function parseObj(text: string, sceneId: string, unitScale = 1.0): ParsedObject[] {
  if (!(unitScale > 0)) throw new Error(`unit scale must be positive, got ${unitScale}`);
  const vertices: number[] = [];
  const groups: Group[] = [];
  let current: Group | null = null;

  const openGroup = (name: string): Group => {
    const g: Group = { name, vmap: new Map(), verts: [], tris: [] };
    groups.push(g);
    return g;
  };

  const lines = text.split('\n');
  for (let lineno = 1; lineno <= lines.length; lineno++) {
    const line = lines[lineno - 1].trim();
    if (!line || line.startsWith('#')) continue;
    const parts = line.split(/\s+/);
    const tag = parts[0];
    if (tag === 'v') {
      if (parts.length < 4) throw new Error(`line ${lineno}: vertex needs 3 coordinates`);
      const x = Number(parts[1]), y = Number(parts[2]), z = Number(parts[3]);
      if (![x, y, z].every(Number.isFinite)) {
        throw new Error(`line ${lineno}: bad vertex coordinate`);
      }
      vertices.push(x, y, z);
    } else if (tag === 'g' || tag === 'o') {
      current = openGroup(parts.length > 1 ? parts.slice(1).join(' ') : 'default');
    } else if (tag === 'f') {
      if (current === null) current = openGroup('default');
      if (parts.length < 4) throw new Error(`line ${lineno}: face needs at least 3 vertices`);
      const corners: number[] = [];
      const nVerts = vertices.length / 3;
      for (const corner of parts.slice(1)) {
        const idx = parseInt(corner.split('/')[0], 10);
        if (!Number.isFinite(idx)) throw new Error(`line ${lineno}: bad face index ${corner}`);
        if (idx === 0) throw new Error(`line ${lineno}: face index 0 (OBJ is 1-based)`);
        const gi = idx > 0 ? idx - 1 : nVerts + idx;
        if (gi < 0 || gi >= nVerts) {
          throw new Error(`line ${lineno}: face index ${idx} out of range (${nVerts} vertices)`);
        }
        let local = current.vmap.get(gi);
        if (local === undefined) {
          local = current.verts.length / 3;
          current.vmap.set(gi, local);
          current.verts.push(vertices[3 * gi], vertices[3 * gi + 1], vertices[3 * gi + 2]);
        }
        corners.push(local);
      }
      for (let i = 1; i + 1 < corners.length; i++) {
        const a = corners[0], b = corners[i], c = corners[i + 1];
        if (a === b || b === c || a === c) {
          throw new Error(`line ${lineno}: degenerate triangle in face`);
        }
        current.tris.push(a, b, c);
      }
    }
    // vt, vn, usemtl, mtllib, s: ignored
  }

  const ordinals = new Map<string, number>();
  const objects: ParsedObject[] = [];
  for (const g of groups) {
    if (g.tris.length === 0) continue;
    const nth = ordinals.get(g.name) ?? 0;
    ordinals.set(g.name, nth + 1);
    const positions = new Float32Array(g.verts.length);
    for (let i = 0; i < g.verts.length; i++) positions[i] = g.verts[i] * unitScale;
    objects.push({
      id: `${sceneId}/${g.name}/${nth}`,
      name: g.name,
      positions,
      triangles: Uint32Array.from(g.tris),
    });
  }
  if (objects.length === 0) throw new Error('OBJ contains no triangles');
  return objects;
}

/** Edge-connected neighbour sets, for client-side brush preview only. */
export function vertexNeighbors(obj: ParsedObject): Array<Set<number>> {
  const n = obj.positions.length / 3;
  const nbrs: Array<Set<number>> = Array.from({ length: n }, () => new Set<number>());
  const t = obj.triangles;
  for (let i = 0; i < t.length; i += 3) {
    const [a, b, c] = [t[i], t[i + 1], t[i + 2]];
    nbrs[a].add(b); nbrs[b].add(a);
    nbrs[b].add(c); nbrs[c].add(b);
    nbrs[a].add(c); nbrs[c].add(a);
  }
  return nbrs;
}
