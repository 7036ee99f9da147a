import { describe, expect, it } from "vitest";
import { base64ToBytes, decodePpm } from "../src/ppm.js";

function encodePpm(width: number, height: number, rgb: number[]): Uint8Array {
  const header = new TextEncoder().encode(`P6\n${width} ${height}\n255\n`);
  const out = new Uint8Array(header.length + rgb.length);
  out.set(header);
  out.set(rgb, header.length);
  return out;
}

describe("decodePpm", () => {
  it("decodes a 2x1 image to RGBA", () => {
    const img = decodePpm(encodePpm(2, 1, [255, 0, 0, 0, 255, 0]));
    expect(img.width).toBe(2);
    expect(img.height).toBe(1);
    expect(Array.from(img.rgba)).toEqual([255, 0, 0, 255, 0, 255, 0, 255]);
  });

  it("rejects non-P6 payloads", () => {
    expect(() => decodePpm(new TextEncoder().encode("P3\n1 1\n255\n"))).toThrow(/P6/);
  });

  it("rejects truncated payloads", () => {
    expect(() => decodePpm(encodePpm(4, 4, [1, 2, 3]))).toThrow(/truncated/);
  });

  it("rejects unsupported maxval", () => {
    const raw = new TextEncoder().encode("P6\n1 1\n65535\n\0\0\0\0\0\0");
    expect(() => decodePpm(raw)).toThrow(/maxval/);
  });
});

describe("base64ToBytes", () => {
  it("decodes base64 in node", () => {
    expect(Array.from(base64ToBytes("UDY="))).toEqual([0x50, 0x36]);
  });

  it("round-trips with Buffer encoding", () => {
    const original = encodePpm(1, 1, [10, 20, 30]);
    const b64 = Buffer.from(original).toString("base64");
    expect(Array.from(base64ToBytes(b64))).toEqual(Array.from(original));
  });
});
