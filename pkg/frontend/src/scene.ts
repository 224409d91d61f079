/**
 * Three.js scene wrapper: target mesh with vertex-color overlays, patch
 * boundary polylines, member polylines, and pick markers.  All geometry
 * arrives from the core; this module only uploads buffers.
 */
import * as THREE from "three";

export class DesignerScene {
  renderer: THREE.WebGLRenderer;
  scene: THREE.Scene;
  camera: THREE.PerspectiveCamera;
  meshObject: THREE.Mesh | null = null;
  overlayGroup: THREE.Group;
  markerGroup: THREE.Group;

  constructor(canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.scene = new THREE.Scene();
    this.scene.background = new THREE.Color(0x202228);
    this.camera = new THREE.PerspectiveCamera(
      45,
      canvas.width / canvas.height,
      0.001,
      100,
    );
    this.camera.position.set(0, -2.5, 1.5);
    this.camera.up.set(0, 0, 1);
    this.camera.lookAt(0, 0, 0);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    const sun = new THREE.DirectionalLight(0xffffff, 0.9);
    sun.position.set(1, -2, 3);
    this.scene.add(sun);
    this.overlayGroup = new THREE.Group();
    this.markerGroup = new THREE.Group();
    this.scene.add(this.overlayGroup, this.markerGroup);
  }

  setMesh(vertices: number[][], faces: number[][]): void {
    if (this.meshObject !== null) {
      this.scene.remove(this.meshObject);
    }
    const geo = new THREE.BufferGeometry();
    geo.setAttribute(
      "position",
      new THREE.Float32BufferAttribute(vertices.flat(), 3),
    );
    geo.setIndex(faces.flat());
    geo.computeVertexNormals();
    const mat = new THREE.MeshLambertMaterial({
      vertexColors: true,
      side: THREE.DoubleSide,
    });
    const colors = new Float32Array(vertices.length * 3).fill(0.75);
    geo.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    this.meshObject = new THREE.Mesh(geo, mat);
    this.scene.add(this.meshObject);
  }

  setVertexColors(colors: Float32Array): void {
    if (this.meshObject === null) {
      return;
    }
    const attr = this.meshObject.geometry.getAttribute(
      "color",
    ) as THREE.BufferAttribute;
    (attr.array as Float32Array).set(colors);
    attr.needsUpdate = true;
  }

  clearPolylines(): void {
    this.overlayGroup.clear();
  }

  addPolyline(positions: number[][], color: number, width = 2): void {
    const geo = new THREE.BufferGeometry();
    geo.setAttribute(
      "position",
      new THREE.Float32BufferAttribute(positions.flat(), 3),
    );
    const mat = new THREE.LineBasicMaterial({ color, linewidth: width });
    this.overlayGroup.add(new THREE.Line(geo, mat));
  }

  setMarkers(points: number[][], sceneDiameter: number): void {
    this.markerGroup.clear();
    const r = 0.008 * sceneDiameter;
    for (const p of points) {
      const ball = new THREE.Mesh(
        new THREE.SphereGeometry(r, 12, 8),
        new THREE.MeshBasicMaterial({ color: 0xffb347 }),
      );
      ball.position.set(p[0], p[1], p[2]);
      this.markerGroup.add(ball);
    }
  }

  /** normalized device coords -> (origin, direction) world ray */
  pickRay(ndcX: number, ndcY: number): { origin: number[]; dir: number[] } {
    const caster = new THREE.Raycaster();
    caster.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    return {
      origin: caster.ray.origin.toArray(),
      dir: caster.ray.direction.toArray(),
    };
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
