import { describe, expect, it } from "vitest";
import {
  canvasToFrame,
  decodeMaskRle,
  encodeFrame,
  initMessage,
  parseServerBinary,
  parseServerText,
  rgbaToRgb,
  routeMessage,
  thresholdsMessage,
} from "../src/protocol.js";

function u16(...vals: number[]): Uint16Array {
  return Uint16Array.from(vals);
}

describe("frame encoding", () => {
  it("writes the FRM0 header little-endian", () => {
    const rgb = new Uint8Array(2 * 3 * 3).fill(7);
    const buf = new Uint8Array(encodeFrame(rgb, 3, 2, 0x01020304));
    expect([...buf.slice(0, 4)]).toEqual([0x46, 0x52, 0x4d, 0x30]); // "FRM0"
    expect([...buf.slice(4, 6)]).toEqual([3, 0]); // width u16 LE
    expect([...buf.slice(6, 8)]).toEqual([2, 0]); // height u16 LE
    expect([...buf.slice(8, 12)]).toEqual([0x04, 0x03, 0x02, 0x01]); // seq LE
    expect(buf.length).toBe(12 + 18);
    expect(buf[12]).toBe(7);
  });

  it("rejects payloads that do not match the dimensions", () => {
    expect(() => encodeFrame(new Uint8Array(10), 3, 2, 0)).toThrow();
  });

  it("drops alpha when converting canvas pixels", () => {
    const rgba = Uint8ClampedArray.from([1, 2, 3, 255, 4, 5, 6, 0]);
    expect([...rgbaToRgb(rgba)]).toEqual([1, 2, 3, 4, 5, 6]);
  });
});

describe("mask run-length decoding", () => {
  it("decodes clear-5 set-3 to pixels 5..7 on an 8-wide row", () => {
    const bits = decodeMaskRle(u16(5, 3), 8, 1);
    expect([...bits]).toEqual([0, 0, 0, 0, 0, 1, 1, 1]);
  });

  it("starts with a clear run even when length zero", () => {
    const bits = decodeMaskRle(u16(0, 4), 4, 1);
    expect([...bits]).toEqual([1, 1, 1, 1]);
  });

  it("decodes an all-clear mask from a single run", () => {
    const bits = decodeMaskRle(u16(6), 3, 2);
    expect([...bits]).toEqual([0, 0, 0, 0, 0, 0]);
  });

  it("continues a long run across a 65535 + zero-run pair", () => {
    // 90000 set pixels: clear 0, set 65535, clear 0, set 24465
    const bits = decodeMaskRle(u16(0, 65535, 0, 90000 - 65535), 300, 300);
    expect(bits.length).toBe(90000);
    expect(bits[0]).toBe(1);
    expect(bits[89999]).toBe(1);
    let total = 0;
    for (const b of bits) total += b;
    expect(total).toBe(90000);
  });

  it("rejects runs that overflow or undershoot the mask", () => {
    expect(() => decodeMaskRle(u16(9), 4, 2)).toThrow();
    expect(() => decodeMaskRle(u16(3), 4, 2)).toThrow();
  });
});

describe("binary parsing", () => {
  it("round-trips a mask message", () => {
    const payload = new ArrayBuffer(12 + 4);
    const dv = new DataView(payload);
    dv.setUint32(0, 0x304b534d, true); // "MSK0"
    dv.setUint32(4, 17, true);
    dv.setUint16(8, 8, true);
    dv.setUint16(10, 1, true);
    dv.setUint16(12, 5, true);
    dv.setUint16(14, 3, true);
    const msg = parseServerBinary(payload);
    expect(msg.kind).toBe("mask");
    if (msg.kind === "mask") {
      expect(msg.seq).toBe(17);
      expect(msg.width).toBe(8);
      expect([...msg.bits]).toEqual([0, 0, 0, 0, 0, 1, 1, 1]);
    }
  });

  it("parses PCM chunks as 16-bit signed little-endian", () => {
    const payload = new ArrayBuffer(12 + 6);
    const dv = new DataView(payload);
    dv.setUint32(0, 0x304d4350, true); // "PCM0"
    dv.setUint32(4, 3, true);
    dv.setUint32(8, 3, true);
    dv.setInt16(12, -32768, true);
    dv.setInt16(14, 0, true);
    dv.setInt16(16, 32767, true);
    const msg = parseServerBinary(payload);
    expect(msg.kind).toBe("pcm");
    if (msg.kind === "pcm") {
      expect(msg.seq).toBe(3);
      expect([...msg.samples]).toEqual([-32768, 0, 32767]);
    }
  });

  it("rejects unknown magics and short PCM payloads", () => {
    const bogus = new ArrayBuffer(16);
    new DataView(bogus).setUint32(0, 0x31313131, true);
    expect(() => parseServerBinary(bogus)).toThrow();
    const short = new ArrayBuffer(12 + 2);
    const dv = new DataView(short);
    dv.setUint32(0, 0x304d4350, true);
    dv.setUint32(8, 5, true); // claims 5 samples, carries 1
    expect(() => parseServerBinary(short)).toThrow();
  });
});

describe("text messages", () => {
  it("parses features frames", () => {
    const msg = parseServerText(JSON.stringify({
      type: "features", seq: 4, A: 120, H: 9.5, W: 14.25, R: 0.67,
      n1: [310.0, 128.5], n2: [330.0, 131.5], angle: 0.05, lost: false,
    }));
    expect(msg.type).toBe("features");
    if (msg.type === "features") {
      expect(msg.A).toBe(120);
      expect(msg.n1[0]).toBeCloseTo(310.0);
    }
  });

  it("rejects frames without a known type", () => {
    expect(() => parseServerText("{\"hello\": 1}")).toThrow();
    expect(() => parseServerText("{\"type\": \"surprise\"}")).toThrow();
  });

  it("rejects structurally broken known types", () => {
    expect(() => parseServerText("{\"type\": \"ack\"}")).toThrow();
    expect(() => parseServerText(JSON.stringify({
      type: "features", seq: 1, A: 10, H: 1, W: 2, R: 0.5,
      n1: [1], n2: [2, 3], angle: 0, lost: false, // n1 malformed
    }))).toThrow();
    expect(() => parseServerText(JSON.stringify({
      type: "features", seq: 1, A: "10", H: 1, W: 2, R: 0.5,
      n1: [1, 2], n2: [2, 3], angle: 0, lost: false, // A not numeric
    }))).toThrow();
  });

  it("builds control messages the engine understands", () => {
    expect(JSON.parse(initMessage(12.7, 9.2))).toEqual(
      { type: "init", x: 13, y: 9 });
    expect(JSON.parse(thresholdsMessage({ red_min: 90, intensity_max: 80 })))
      .toEqual({ type: "thresholds", red_min: 90, intensity_max: 80 });
    const r = JSON.parse(routeMessage({
      source: "area", target: "p_lung", curve: "linear",
      out_min: 0, out_max: 600, invert: false, smoothing_ms: 0,
    }));
    expect(r.type).toBe("route");
    expect(r.target).toBe("p_lung");
  });
});

describe("click mapping", () => {
  it("maps a canvas center click to frame center at 2x scale", () => {
    const [x, y] = canvasToFrame(640, 480, 1280, 960, 640, 480);
    expect(x).toBeCloseTo(320);
    expect(y).toBeCloseTo(240);
  });

  it("scales axes independently", () => {
    const [x, y] = canvasToFrame(100, 30, 200, 60, 640, 480);
    expect(x).toBeCloseTo(320);
    expect(y).toBeCloseTo(240);
  });
});
