/** Wire protocol: binary framing and JSON message shapes.
 *
 * Everything here is pure data transformation so it can be unit tested
 * without a socket or a DOM. All multi-byte integers are little-endian.
 */

export interface FeaturesMsg {
  type: "features";
  seq: number;
  A: number;
  H: number;
  W: number;
  R: number;
  n1: [number, number];
  n2: [number, number];
  angle: number;
  lost: boolean;
}

export interface AckMsg {
  type: "ack";
  msg: string;
}

export interface ErrorMsg {
  type: "error";
  msg: string;
}

export type ServerText = FeaturesMsg | AckMsg | ErrorMsg;

export interface MaskMsg {
  kind: "mask";
  seq: number;
  width: number;
  height: number;
  /** one byte per pixel, 0/1, row-major */
  bits: Uint8Array;
}

export interface PcmMsg {
  kind: "pcm";
  seq: number;
  samples: Int16Array;
}

export interface Thresholds {
  red_min: number;
  intensity_max: number;
}

export interface RouteSpec {
  source: string;
  target: string;
  out_min: number;
  out_max: number;
  curve: "linear" | "exponential";
  invert: boolean;
  smoothing_ms: number;
}

const FRM0 = 0x304d5246; // "FRM0" read as LE u32
const MSK0 = 0x304b534d;
const PCM0 = 0x304d4350;

function isPoint(v: unknown): v is [number, number] {
  return Array.isArray(v) && v.length === 2 &&
    typeof v[0] === "number" && typeof v[1] === "number";
}

export function parseServerText(raw: string): ServerText {
  const obj = JSON.parse(raw);
  if (obj === null || typeof obj !== "object" || typeof obj.type !== "string") {
    throw new Error("not a protocol message");
  }
  switch (obj.type) {
    case "ack":
    case "error":
      if (typeof obj.msg !== "string") throw new Error(`${obj.type} without msg`);
      return obj as ServerText;
    case "features": {
      for (const k of ["seq", "A", "H", "W", "R", "angle"]) {
        if (typeof obj[k] !== "number") {
          throw new Error(`features missing numeric ${k}`);
        }
      }
      if (!isPoint(obj.n1) || !isPoint(obj.n2) || typeof obj.lost !== "boolean") {
        throw new Error("features missing n1/n2/lost");
      }
      return obj as ServerText;
    }
    default:
      throw new Error(`unknown message type ${obj.type}`);
  }
}

/** Drop the alpha channel of canvas ImageData pixels. */
export function rgbaToRgb(rgba: Uint8ClampedArray): Uint8Array {
  const n = rgba.length / 4;
  const rgb = new Uint8Array(n * 3);
  for (let i = 0, j = 0; i < rgba.length; i += 4, j += 3) {
    rgb[j] = rgba[i];
    rgb[j + 1] = rgba[i + 1];
    rgb[j + 2] = rgba[i + 2];
  }
  return rgb;
}

export function encodeFrame(
  rgb: Uint8Array,
  width: number,
  height: number,
  seq: number,
): ArrayBuffer {
  if (rgb.length !== width * height * 3) {
    throw new Error(`rgb payload ${rgb.length} != ${width}x${height}x3`);
  }
  const buf = new ArrayBuffer(12 + rgb.length);
  const view = new DataView(buf);
  view.setUint32(0, FRM0, true);
  view.setUint16(4, width, true);
  view.setUint16(6, height, true);
  view.setUint32(8, seq >>> 0, true);
  new Uint8Array(buf, 12).set(rgb);
  return buf;
}

/** Alternating run lengths, clear run first; 65535 + zero-length run
 * continues a long run without switching polarity. */
export function decodeMaskRle(
  runs: Uint16Array,
  width: number,
  height: number,
): Uint8Array {
  const total = width * height;
  const bits = new Uint8Array(total);
  let pos = 0;
  let val = 0;
  for (const r of runs) {
    if (pos + r > total) throw new Error("mask runs overflow dimensions");
    if (val) bits.fill(1, pos, pos + r);
    pos += r;
    val ^= 1;
  }
  if (pos !== total) {
    throw new Error(`mask runs cover ${pos} of ${total} pixels`);
  }
  return bits;
}

export function parseServerBinary(data: ArrayBuffer): MaskMsg | PcmMsg {
  if (data.byteLength < 12) throw new Error("binary message too short");
  const view = new DataView(data);
  const magic = view.getUint32(0, true);
  if (magic === MSK0) {
    const seq = view.getUint32(4, true);
    const width = view.getUint16(8, true);
    const height = view.getUint16(10, true);
    const runs = new Uint16Array(data.slice(12));
    return { kind: "mask", seq, width, height,
             bits: decodeMaskRle(runs, width, height) };
  }
  if (magic === PCM0) {
    const seq = view.getUint32(4, true);
    const n = view.getUint32(8, true);
    if (data.byteLength !== 12 + 2 * n) {
      throw new Error(`pcm payload ${data.byteLength - 12} != 2*${n}`);
    }
    return { kind: "pcm", seq, samples: new Int16Array(data.slice(12)) };
  }
  throw new Error("unknown binary magic");
}

export function initMessage(x: number, y: number): string {
  return JSON.stringify({ type: "init", x: Math.round(x), y: Math.round(y) });
}

export function thresholdsMessage(t: Thresholds): string {
  return JSON.stringify({
    type: "thresholds",
    red_min: t.red_min,
    intensity_max: t.intensity_max,
  });
}

export function routeMessage(r: RouteSpec): string {
  return JSON.stringify({ type: "route", ...r });
}

export function calibrateMessage(seconds: number): string {
  return JSON.stringify({ type: "calibrate", seconds });
}

/** Canvas click to frame pixel: the canvas may be CSS-scaled. */
export function canvasToFrame(
  clickX: number,
  clickY: number,
  canvasW: number,
  canvasH: number,
  frameW: number,
  frameH: number,
): [number, number] {
  return [(clickX * frameW) / canvasW, (clickY * frameH) / canvasH];
}
