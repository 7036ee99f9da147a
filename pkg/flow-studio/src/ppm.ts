/** Decode the service's base64 binary PPM previews into RGBA pixels. */

export interface DecodedImage {
  width: number;
  height: number;
  rgba: Uint8ClampedArray;
}

export function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}

export function decodePpm(bytes: Uint8Array): DecodedImage {
  if (bytes[0] !== 0x50 || bytes[1] !== 0x36) {
    throw new Error("not a binary PPM (P6) payload");
  }
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < bytes.length && isSpace(bytes[pos])) pos++;
    if (bytes[pos] === 0x23) {
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos++;
      continue;
    }
    let token = "";
    while (pos < bytes.length && !isSpace(bytes[pos])) {
      token += String.fromCharCode(bytes[pos]);
      pos++;
    }
    if (!token) throw new Error("truncated PPM header");
    const value = Number(token);
    if (!Number.isInteger(value)) throw new Error(`bad PPM header token: ${token}`);
    fields.push(value);
  }
  const [width, height, maxval] = fields;
  if (maxval !== 255) throw new Error(`unsupported PPM maxval ${maxval}`);
  pos++; // single whitespace after maxval
  const expected = width * height * 3;
  if (bytes.length - pos < expected) throw new Error("truncated PPM payload");
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    rgba[i * 4] = bytes[pos + i * 3];
    rgba[i * 4 + 1] = bytes[pos + i * 3 + 1];
    rgba[i * 4 + 2] = bytes[pos + i * 3 + 2];
    rgba[i * 4 + 3] = 255;
  }
  return { width, height, rgba };
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d;
}
