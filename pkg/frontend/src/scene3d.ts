// Rendering layer: three.js scene graph, mouse picking, selection highlight,
// ghost clones and measurement markers. Semantic state lives elsewhere; this
// module only draws what it is told.

import * as THREE from 'three';
import { OrbitControls } from 'three/addons/controls/OrbitControls.js';
import { ParsedObject } from './obj';
import { TransformDict } from './state';

const OBJECT_COLORS = [0x7aa2f7, 0x9ece6a, 0xe0af68, 0xf7768e, 0xbb9af7, 0x7dcfff];

interface Entry {
  parsed: ParsedObject;
  mesh: THREE.Mesh;
  ghost: THREE.Mesh;
  highlight: THREE.Points;
}

export function applyTransform(target: THREE.Object3D, t: TransformDict): void {
  target.position.set(t.translation[0], t.translation[1], t.translation[2]);
  const [w, x, y, z] = t.rotation;
  target.quaternion.set(x, y, z, w);
  target.scale.set(t.scale[0], t.scale[1], t.scale[2]);
}

export class SceneView {
  readonly renderer: THREE.WebGLRenderer;
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  readonly controls: OrbitControls;
  private entries = new Map<string, Entry>();
  private markers = new THREE.Group();
  private raycaster = new THREE.Raycaster();

  constructor(private container: HTMLElement) {
    this.renderer = new THREE.WebGLRenderer({ antialias: true, preserveDrawingBuffer: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    container.appendChild(this.renderer.domElement);
    this.camera = new THREE.PerspectiveCamera(60, 1, 0.01, 1000);
    this.camera.position.set(3, 2, 4);
    this.controls = new OrbitControls(this.camera, this.renderer.domElement);
    this.scene.background = new THREE.Color(0x121212);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const sun = new THREE.DirectionalLight(0xffffff, 1.1);
    sun.position.set(4, 7, 5);
    this.scene.add(sun);
    this.scene.add(new THREE.GridHelper(10, 20, 0x333333, 0x222222));
    this.scene.add(this.markers);
    this.resize();
    window.addEventListener('resize', () => this.resize());
    this.renderer.setAnimationLoop(() => {
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
    });
  }

  private resize(): void {
    const w = this.container.clientWidth || 800;
    const h = this.container.clientHeight || 600;
    this.renderer.setSize(w, h);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
  }

  clear(): void {
    for (const e of this.entries.values()) {
      this.scene.remove(e.mesh, e.ghost, e.highlight);
    }
    this.entries.clear();
    this.markers.clear();
  }

  loadObjects(objects: ParsedObject[],
              poses: Map<string, TransformDict>,
              originals: Map<string, TransformDict>): void {
    this.clear();
    objects.forEach((parsed, i) => {
      const geometry = new THREE.BufferGeometry();
      geometry.setAttribute('position', new THREE.BufferAttribute(parsed.positions, 3));
      geometry.setIndex(new THREE.BufferAttribute(parsed.triangles, 1));
      geometry.computeVertexNormals();
      const color = OBJECT_COLORS[i % OBJECT_COLORS.length];
      const mesh = new THREE.Mesh(
        geometry,
        new THREE.MeshLambertMaterial({ color, side: THREE.DoubleSide }));
      mesh.userData.objectId = parsed.id;

      const ghost = new THREE.Mesh(
        geometry,
        new THREE.MeshBasicMaterial({ color, transparent: true, opacity: 0.25, depthWrite: false }));
      ghost.visible = false;

      const highlight = new THREE.Points(
        new THREE.BufferGeometry(),
        new THREE.PointsMaterial({ color: 0xffff66, size: 0.06 }));

      const pose = poses.get(parsed.id);
      if (pose) applyTransform(mesh, pose);
      const original = originals.get(parsed.id);
      if (original) applyTransform(ghost, original);

      this.scene.add(mesh, ghost, highlight);
      this.entries.set(parsed.id, { parsed, mesh, ghost, highlight });
    });
    this.frameAll(objects);
  }

  private frameAll(objects: ParsedObject[]): void {
    const box = new THREE.Box3();
    for (const o of objects) {
      for (let i = 0; i < o.positions.length; i += 3) {
        box.expandByPoint(new THREE.Vector3(o.positions[i], o.positions[i + 1], o.positions[i + 2]));
      }
    }
    if (box.isEmpty()) return;
    const center = box.getCenter(new THREE.Vector3());
    const size = box.getSize(new THREE.Vector3()).length() || 1;
    this.controls.target.copy(center);
    this.camera.position.copy(center).add(new THREE.Vector3(size, size * 0.7, size * 1.2));
  }

  setPose(objectId: string, t: TransformDict): void {
    const e = this.entries.get(objectId);
    if (e) applyTransform(e.mesh, t);
  }

  setGhostVisible(objectId: string, visible: boolean): void {
    const e = this.entries.get(objectId);
    if (e) e.ghost.visible = visible;
  }

  setHighlight(objectId: string | null, indices: Set<number>): void {
    for (const [id, e] of this.entries) {
      if (id !== objectId || indices.size === 0) {
        e.highlight.geometry.setAttribute('position', new THREE.BufferAttribute(new Float32Array(0), 3));
        continue;
      }
      const pts = new Float32Array(indices.size * 3);
      let k = 0;
      for (const vi of indices) {
        pts[k++] = e.parsed.positions[3 * vi];
        pts[k++] = e.parsed.positions[3 * vi + 1];
        pts[k++] = e.parsed.positions[3 * vi + 2];
      }
      e.highlight.geometry.setAttribute('position', new THREE.BufferAttribute(pts, 3));
      e.highlight.position.copy(e.mesh.position);
      e.highlight.quaternion.copy(e.mesh.quaternion);
      e.highlight.scale.copy(e.mesh.scale);
    }
  }

  /** Face under the pointer → its three vertex indices, for the brush. */
  pickFaceVertices(clientX: number, clientY: number): { objectId: string; indices: number[] } | null {
    const hit = this.castRay(clientX, clientY);
    if (!hit || hit.faceIndex === undefined || hit.faceIndex === null) return null;
    const objectId = (hit.object as THREE.Mesh).userData.objectId as string;
    const e = this.entries.get(objectId);
    if (!e) return null;
    const f = hit.faceIndex * 3;
    return {
      objectId,
      indices: [e.parsed.triangles[f], e.parsed.triangles[f + 1], e.parsed.triangles[f + 2]],
    };
  }

  pickPoint(clientX: number, clientY: number): [number, number, number] | null {
    const hit = this.castRay(clientX, clientY);
    if (!hit) return null;
    return [hit.point.x, hit.point.y, hit.point.z];
  }

  pickObject(clientX: number, clientY: number): string | null {
    const hit = this.castRay(clientX, clientY);
    return hit ? ((hit.object as THREE.Mesh).userData.objectId as string) : null;
  }

  /** Drag helper: intersect the pointer ray with a camera-facing plane through `anchor`. */
  dragPoint(clientX: number, clientY: number, anchor: THREE.Vector3): THREE.Vector3 | null {
    const normal = this.camera.getWorldDirection(new THREE.Vector3()).negate();
    const plane = new THREE.Plane().setFromNormalAndCoplanarPoint(normal, anchor);
    this.setRayFromClient(clientX, clientY);
    const out = new THREE.Vector3();
    return this.raycaster.ray.intersectPlane(plane, out) ? out : null;
  }

  meshPosition(objectId: string): THREE.Vector3 | null {
    const e = this.entries.get(objectId);
    return e ? e.mesh.position.clone() : null;
  }

  moveMeshTo(objectId: string, p: THREE.Vector3): void {
    const e = this.entries.get(objectId);
    if (e) {
      e.mesh.position.copy(p);
      e.highlight.position.copy(p);
    }
  }

  addMeasureMarker(a: [number, number, number], b: [number, number, number], text: string): void {
    const geo = new THREE.BufferGeometry().setFromPoints([
      new THREE.Vector3(...a), new THREE.Vector3(...b)]);
    this.markers.add(new THREE.Line(geo, new THREE.LineBasicMaterial({ color: 0xffcc00 })));
    const label = makeTextSprite(text);
    label.position.set((a[0] + b[0]) / 2, (a[1] + b[1]) / 2 + 0.08, (a[2] + b[2]) / 2);
    this.markers.add(label);
  }

  clearMeasureMarkers(): void {
    this.markers.clear();
  }

  /** PNG of the current framebuffer, base64 without the data: prefix. */
  captureSnapshot(): string {
    this.renderer.render(this.scene, this.camera);
    return this.renderer.domElement.toDataURL('image/png').split(',')[1];
  }

  private castRay(clientX: number, clientY: number): THREE.Intersection | null {
    this.setRayFromClient(clientX, clientY);
    const meshes = [...this.entries.values()].map((e) => e.mesh);
    const hits = this.raycaster.intersectObjects(meshes, false);
    return hits.length ? hits[0] : null;
  }

  private setRayFromClient(clientX: number, clientY: number): void {
    const rect = this.renderer.domElement.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((clientX - rect.left) / rect.width) * 2 - 1,
      -((clientY - rect.top) / rect.height) * 2 + 1);
    this.raycaster.setFromCamera(ndc, this.camera);
  }
}

function makeTextSprite(text: string): THREE.Sprite {
  const canvas = document.createElement('canvas');
  canvas.width = 256;
  canvas.height = 64;
  const ctx = canvas.getContext('2d')!;
  ctx.font = '28px system-ui, sans-serif';
  ctx.fillStyle = '#ffcc00';
  ctx.textAlign = 'center';
  ctx.textBaseline = 'middle';
  ctx.fillText(text, 128, 32);
  const sprite = new THREE.Sprite(new THREE.SpriteMaterial({
    map: new THREE.CanvasTexture(canvas),
    transparent: true,
    depthTest: false,
  }));
  sprite.scale.set(0.8, 0.2, 1);
  return sprite;
}
