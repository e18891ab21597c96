/** Orbitable 3D view of an extracted fiber surface.
 *
 * Geometry preparation is pure and testable; the WebGL plumbing is a thin
 * shell around it and degrades to a text summary where WebGL is missing,
 * so the panel still reports what came back from the server.
 */

import { yellows } from "./colors.js";
import type { MeshDoc, SeedDoc } from "./types.js";

export interface MeshBuffers {
  positions: Float32Array;
  normals: Float32Array;
  colors: Float32Array;
  indices: Uint32Array;
  center: [number, number, number];
  radius: number;
}

export function buildMeshBuffers(doc: MeshDoc): MeshBuffers {
  const nv = doc.vertices.length;
  const positions = new Float32Array(nv * 3);
  const normals = new Float32Array(nv * 3);
  const colors = new Float32Array(nv * 3);
  const indices = new Uint32Array(doc.triangles.length * 3);

  const lo: [number, number, number] = [Infinity, Infinity, Infinity];
  const hi: [number, number, number] = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < nv; i++) {
    const v = doc.vertices[i]!;
    for (let k = 0; k < 3; k++) {
      const x = v[k]!;
      positions[i * 3 + k] = x;
      if (x < lo[k]!) lo[k] = x;
      if (x > hi[k]!) hi[k] = x;
    }
  }
  for (const s of doc.seeds ?? []) {
    for (let k = 0; k < 3; k++) {
      const x = s.center[k]!;
      if (x < lo[k]!) lo[k] = x;
      if (x > hi[k]!) hi[k] = x;
    }
  }

  // tint by the first range value so the surface echoes the heatmap axis
  let fLo = Infinity;
  let fHi = -Infinity;
  for (const val of doc.values) {
    const f = val[0]!;
    if (f < fLo) fLo = f;
    if (f > fHi) fHi = f;
  }
  const span = fHi - fLo || 1;
  for (let i = 0; i < nv; i++) {
    const t = 0.2 + 0.7 * ((doc.values[i]![0]! - fLo) / span);
    const [r, g, b] = yellows(t);
    colors[i * 3] = r / 255;
    colors[i * 3 + 1] = g / 255;
    colors[i * 3 + 2] = b / 255;
  }

  for (let f = 0; f < doc.triangles.length; f++) {
    const tri = doc.triangles[f]!;
    const [a, b, c] = [tri[0]!, tri[1]!, tri[2]!];
    indices[f * 3] = a;
    indices[f * 3 + 1] = b;
    indices[f * 3 + 2] = c;
    // accumulate area-weighted face normals, then normalize per vertex
    const ax = positions[a * 3]!;
    const ay = positions[a * 3 + 1]!;
    const az = positions[a * 3 + 2]!;
    const ux = positions[b * 3]! - ax;
    const uy = positions[b * 3 + 1]! - ay;
    const uz = positions[b * 3 + 2]! - az;
    const wx = positions[c * 3]! - ax;
    const wy = positions[c * 3 + 1]! - ay;
    const wz = positions[c * 3 + 2]! - az;
    const nx = uy * wz - uz * wy;
    const ny = uz * wx - ux * wz;
    const nz = ux * wy - uy * wx;
    for (const idx of [a, b, c]) {
      normals[idx * 3] = normals[idx * 3]! + nx;
      normals[idx * 3 + 1] = normals[idx * 3 + 1]! + ny;
      normals[idx * 3 + 2] = normals[idx * 3 + 2]! + nz;
    }
  }
  for (let i = 0; i < nv; i++) {
    const nx = normals[i * 3]!;
    const ny = normals[i * 3 + 1]!;
    const nz = normals[i * 3 + 2]!;
    const len = Math.hypot(nx, ny, nz) || 1;
    normals[i * 3] = nx / len;
    normals[i * 3 + 1] = ny / len;
    normals[i * 3 + 2] = nz / len;
  }

  const finite = nv > 0 || (doc.seeds ?? []).length > 0;
  const center: [number, number, number] = finite
    ? [(lo[0]! + hi[0]!) / 2, (lo[1]! + hi[1]!) / 2, (lo[2]! + hi[2]!) / 2]
    : [0, 0, 0];
  const radius = finite
    ? Math.max(hi[0]! - lo[0]!, hi[1]! - lo[1]!, hi[2]! - lo[2]!) / 2 || 0.5
    : 0.5;
  return { positions, normals, colors, indices, center, radius };
}

const ELEMENT_COLORS: Record<string, [number, number, number]> = {
  H: [0.92, 0.92, 0.92],
  C: [0.33, 0.33, 0.33],
  N: [0.2, 0.32, 0.97],
  O: [0.9, 0.13, 0.13],
  S: [0.95, 0.8, 0.19],
  P: [1.0, 0.5, 0.0],
};
const DEFAULT_ELEMENT_COLOR: [number, number, number] = [0.3, 0.72, 0.68];

export interface SeedSphere {
  center: [number, number, number];
  radius: number;
  color: [number, number, number];
  element: string;
}

/** Display spheres for seed atoms, scaled so the largest stays readable
 * against the scene: relative sizes follow sqrt(weight), the covalent
 * radius behind the default weights.
 */
export function buildSeedSpheres(
  seeds: SeedDoc[],
  sceneRadius: number,
): SeedSphere[] {
  if (seeds.length === 0) return [];
  const raw = seeds.map((s) => Math.sqrt(Math.max(s.weight, 0)) || 1);
  const maxRaw = Math.max(...raw);
  const scale = (0.1 * sceneRadius) / (maxRaw || 1);
  return seeds.map((s, i) => ({
    center: s.center,
    radius: raw[i]! * scale,
    color: ELEMENT_COLORS[s.element] ?? DEFAULT_ELEMENT_COLOR,
    element: s.element,
  }));
}

export interface SphereGeometry {
  positions: Float32Array;
  normals: Float32Array;
  indices: Uint32Array;
}

/** Unit lat-long sphere; every position doubles as its own normal. */
export function unitSphere(stacks = 10, slices = 14): SphereGeometry {
  const positions: number[] = [];
  const indices: number[] = [];
  for (let i = 0; i <= stacks; i++) {
    const phi = (i / stacks) * Math.PI;
    for (let j = 0; j <= slices; j++) {
      const theta = (j / slices) * 2 * Math.PI;
      positions.push(
        Math.sin(phi) * Math.cos(theta),
        Math.cos(phi),
        Math.sin(phi) * Math.sin(theta),
      );
    }
  }
  const row = slices + 1;
  for (let i = 0; i < stacks; i++) {
    for (let j = 0; j < slices; j++) {
      const a = i * row + j;
      indices.push(a, a + row, a + 1, a + 1, a + row, a + row + 1);
    }
  }
  const pos = new Float32Array(positions);
  return {
    positions: pos,
    normals: pos.slice(),
    indices: new Uint32Array(indices),
  };
}

// -- minimal column-major mat4 helpers ----------------------------------------

export type Mat4 = Float32Array;

export function perspective(fovY: number, aspect: number, near: number, far: number): Mat4 {
  const f = 1 / Math.tan(fovY / 2);
  const m = new Float32Array(16);
  m[0] = f / aspect;
  m[5] = f;
  m[10] = (far + near) / (near - far);
  m[11] = -1;
  m[14] = (2 * far * near) / (near - far);
  return m;
}

export function lookAt(
  eye: [number, number, number],
  target: [number, number, number],
  up: [number, number, number] = [0, 1, 0],
): Mat4 {
  const zx = eye[0] - target[0];
  const zy = eye[1] - target[1];
  const zz = eye[2] - target[2];
  const zl = Math.hypot(zx, zy, zz) || 1;
  const z = [zx / zl, zy / zl, zz / zl] as const;
  const xx = up[1] * z[2] - up[2] * z[1];
  const xy = up[2] * z[0] - up[0] * z[2];
  const xz = up[0] * z[1] - up[1] * z[0];
  const xl = Math.hypot(xx, xy, xz) || 1;
  const x = [xx / xl, xy / xl, xz / xl] as const;
  const y = [
    z[1] * x[2] - z[2] * x[1],
    z[2] * x[0] - z[0] * x[2],
    z[0] * x[1] - z[1] * x[0],
  ] as const;
  const m = new Float32Array(16);
  m[0] = x[0];
  m[1] = y[0];
  m[2] = z[0];
  m[4] = x[1];
  m[5] = y[1];
  m[6] = z[1];
  m[8] = x[2];
  m[9] = y[2];
  m[10] = z[2];
  m[12] = -(x[0] * eye[0] + x[1] * eye[1] + x[2] * eye[2]);
  m[13] = -(y[0] * eye[0] + y[1] * eye[1] + y[2] * eye[2]);
  m[14] = -(z[0] * eye[0] + z[1] * eye[1] + z[2] * eye[2]);
  m[15] = 1;
  return m;
}

// -- the panel -----------------------------------------------------------------

const VERT_SRC = `
attribute vec3 aPos;
attribute vec3 aNormal;
attribute vec3 aColor;
uniform mat4 uProj;
uniform mat4 uView;
uniform vec3 uOffset;
uniform float uScale;
varying vec3 vNormal;
varying vec3 vColor;
void main() {
  vNormal = aNormal;
  vColor = aColor;
  gl_Position = uProj * uView * vec4(aPos * uScale + uOffset, 1.0);
}
`;

const FRAG_SRC = `
precision mediump float;
uniform vec4 uColorOverride;
varying vec3 vNormal;
varying vec3 vColor;
void main() {
  vec3 lightDir = normalize(vec3(0.4, 0.7, 0.6));
  float lit = 0.35 + 0.65 * abs(dot(normalize(vNormal), lightDir));
  vec3 base = uColorOverride.a > 0.0 ? uColorOverride.rgb : vColor;
  gl_FragColor = vec4(base * lit, 1.0);
}
`;

interface GlState {
  gl: WebGLRenderingContext;
  program: WebGLProgram;
  aPos: number;
  aNormal: number;
  aColor: number;
  uProj: WebGLUniformLocation | null;
  uView: WebGLUniformLocation | null;
  uOffset: WebGLUniformLocation | null;
  uScale: WebGLUniformLocation | null;
  uColorOverride: WebGLUniformLocation | null;
  meshVbo: WebGLBuffer | null;
  meshNbo: WebGLBuffer | null;
  meshCbo: WebGLBuffer | null;
  meshIbo: WebGLBuffer | null;
  meshCount: number;
  sphereVbo: WebGLBuffer | null;
  sphereNbo: WebGLBuffer | null;
  sphereIbo: WebGLBuffer | null;
  sphereCount: number;
  uint32Indices: boolean;
}

function compile(gl: WebGLRenderingContext, kind: number, src: string): WebGLShader {
  const sh = gl.createShader(kind);
  if (!sh) throw new Error("shader allocation failed");
  gl.shaderSource(sh, src);
  gl.compileShader(sh);
  if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS))
    throw new Error(gl.getShaderInfoLog(sh) ?? "shader compile failed");
  return sh;
}

export class MeshPanel {
  readonly root: HTMLElement;
  readonly canvas: HTMLCanvasElement;
  readonly status: HTMLElement;
  private readonly fallback: HTMLElement;
  private glState: GlState | null = null;
  private buffers: MeshBuffers | null = null;
  private spheres: SeedSphere[] = [];
  private yaw = 0.7;
  private pitch = 0.5;
  private dist = 3;

  constructor(root: HTMLElement) {
    this.root = root;
    root.classList.add("mesh-panel");
    const title = document.createElement("div");
    title.className = "panel-title";
    title.textContent = "Fiber surface";
    this.status = document.createElement("div");
    this.status.className = "mesh-status";
    this.status.textContent = "no mesh yet — draw a polygon on a pinned scatterplot";
    this.canvas = document.createElement("canvas");
    this.canvas.width = 480;
    this.canvas.height = 400;
    this.canvas.className = "mesh-canvas";
    this.fallback = document.createElement("div");
    this.fallback.className = "mesh-fallback";
    this.fallback.hidden = true;
    root.append(title, this.status, this.canvas, this.fallback);

    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.canvas.addEventListener("mousedown", (e) => {
      dragging = true;
      lastX = e.clientX;
      lastY = e.clientY;
    });
    window.addEventListener("mouseup", () => {
      dragging = false;
    });
    window.addEventListener("mousemove", (e) => {
      if (!dragging) return;
      this.yaw += (e.clientX - lastX) * 0.01;
      this.pitch = Math.min(
        1.45,
        Math.max(-1.45, this.pitch + (e.clientY - lastY) * 0.01),
      );
      lastX = e.clientX;
      lastY = e.clientY;
      this.renderFrame();
    });
    this.canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.dist = Math.min(20, Math.max(1.2, this.dist * Math.exp(e.deltaY * 0.001)));
      this.renderFrame();
    });
  }

  setMesh(doc: MeshDoc): void {
    const nTri = doc.triangles.length;
    const nVert = doc.vertices.length;
    const seedCount = (doc.seeds ?? []).length;
    this.status.textContent =
      `${doc.state} · t=${doc.time_index} · ${nTri} triangles · ` +
      `${nVert} vertices · ${seedCount} seeds`;
    this.status.dataset.triangles = String(nTri);
    this.status.dataset.vertices = String(nVert);
    if (nTri === 0) {
      this.status.textContent += " — polygon misses the populated range";
    }
    this.buffers = buildMeshBuffers(doc);
    this.spheres = buildSeedSpheres(doc.seeds ?? [], this.buffers.radius);
    this.upload();
    this.renderFrame();
  }

  private ensureGl(): GlState | null {
    if (this.glState) return this.glState;
    const gl = this.canvas.getContext("webgl") as WebGLRenderingContext | null;
    if (!gl) {
      this.fallback.hidden = false;
      this.fallback.textContent =
        "WebGL unavailable; the mesh summary above reflects the server response.";
      return null;
    }
    const program = gl.createProgram();
    if (!program) return null;
    gl.attachShader(program, compile(gl, gl.VERTEX_SHADER, VERT_SRC));
    gl.attachShader(program, compile(gl, gl.FRAGMENT_SHADER, FRAG_SRC));
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS))
      throw new Error(gl.getProgramInfoLog(program) ?? "link failed");
    this.glState = {
      gl,
      program,
      aPos: gl.getAttribLocation(program, "aPos"),
      aNormal: gl.getAttribLocation(program, "aNormal"),
      aColor: gl.getAttribLocation(program, "aColor"),
      uProj: gl.getUniformLocation(program, "uProj"),
      uView: gl.getUniformLocation(program, "uView"),
      uOffset: gl.getUniformLocation(program, "uOffset"),
      uScale: gl.getUniformLocation(program, "uScale"),
      uColorOverride: gl.getUniformLocation(program, "uColorOverride"),
      meshVbo: null,
      meshNbo: null,
      meshCbo: null,
      meshIbo: null,
      meshCount: 0,
      sphereVbo: null,
      sphereNbo: null,
      sphereIbo: null,
      sphereCount: 0,
      uint32Indices: Boolean(gl.getExtension("OES_element_index_uint")),
    };
    return this.glState;
  }

  private upload(): void {
    const st = this.ensureGl();
    if (!st || !this.buffers) return;
    const { gl } = st;
    const b = this.buffers;

    const fill = (buf: WebGLBuffer | null, data: ArrayBufferView, target: number) => {
      const vbo = buf ?? gl.createBuffer();
      gl.bindBuffer(target, vbo);
      gl.bufferData(target, data, gl.STATIC_DRAW);
      return vbo;
    };
    st.meshVbo = fill(st.meshVbo, b.positions, gl.ARRAY_BUFFER);
    st.meshNbo = fill(st.meshNbo, b.normals, gl.ARRAY_BUFFER);
    st.meshCbo = fill(st.meshCbo, b.colors, gl.ARRAY_BUFFER);
    const idx = st.uint32Indices ? b.indices : new Uint16Array(b.indices);
    st.meshIbo = fill(st.meshIbo, idx, gl.ELEMENT_ARRAY_BUFFER);
    st.meshCount = b.indices.length;

    if (st.sphereVbo === null) {
      const sphere = unitSphere();
      st.sphereVbo = fill(null, sphere.positions, gl.ARRAY_BUFFER);
      st.sphereNbo = fill(null, sphere.normals, gl.ARRAY_BUFFER);
      const sIdx = st.uint32Indices ? sphere.indices : new Uint16Array(sphere.indices);
      st.sphereIbo = fill(null, sIdx, gl.ELEMENT_ARRAY_BUFFER);
      st.sphereCount = sphere.indices.length;
    }
  }

  renderFrame(): void {
    const st = this.glState;
    if (!st || !this.buffers) return;
    const { gl } = st;
    const b = this.buffers;
    const indexType = st.uint32Indices ? gl.UNSIGNED_INT : gl.UNSIGNED_SHORT;

    gl.viewport(0, 0, this.canvas.width, this.canvas.height);
    gl.enable(gl.DEPTH_TEST);
    gl.clearColor(0.07, 0.09, 0.12, 1);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    gl.useProgram(st.program);

    const r = b.radius * this.dist;
    const eye: [number, number, number] = [
      b.center[0] + r * Math.cos(this.pitch) * Math.sin(this.yaw),
      b.center[1] + r * Math.sin(this.pitch),
      b.center[2] + r * Math.cos(this.pitch) * Math.cos(this.yaw),
    ];
    const proj = perspective(
      Math.PI / 4,
      this.canvas.width / this.canvas.height,
      b.radius * 0.01,
      b.radius * 100,
    );
    gl.uniformMatrix4fv(st.uProj, false, proj);
    gl.uniformMatrix4fv(st.uView, false, lookAt(eye, b.center));

    const bindArray = (vbo: WebGLBuffer | null, loc: number) => {
      if (loc < 0 || !vbo) return;
      gl.bindBuffer(gl.ARRAY_BUFFER, vbo);
      gl.enableVertexAttribArray(loc);
      gl.vertexAttribPointer(loc, 3, gl.FLOAT, false, 0, 0);
    };

    if (st.meshCount > 0) {
      bindArray(st.meshVbo, st.aPos);
      bindArray(st.meshNbo, st.aNormal);
      bindArray(st.meshCbo, st.aColor);
      gl.uniform3f(st.uOffset, 0, 0, 0);
      gl.uniform1f(st.uScale, 1);
      gl.uniform4f(st.uColorOverride, 0, 0, 0, 0);
      gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, st.meshIbo);
      gl.drawElements(gl.TRIANGLES, st.meshCount, indexType, 0);
    }

    bindArray(st.sphereVbo, st.aPos);
    bindArray(st.sphereNbo, st.aNormal);
    bindArray(st.sphereVbo, st.aColor); // overridden by the uniform below
    for (const s of this.spheres) {
      gl.uniform3f(st.uOffset, s.center[0], s.center[1], s.center[2]);
      gl.uniform1f(st.uScale, s.radius);
      gl.uniform4f(st.uColorOverride, s.color[0], s.color[1], s.color[2], 1);
      gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, st.sphereIbo);
      gl.drawElements(gl.TRIANGLES, st.sphereCount, indexType, 0);
    }
  }
}
