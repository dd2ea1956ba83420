// Base64 float32 raster decoding and buffer integrity checks.
// The API ships little-endian float32; typed-array views are little-endian on
// every platform we target, asserted at decode time.

import type { RasterPayload, Rect } from "./types.js";

const B64_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
const B64_LOOKUP = new Int16Array(128).fill(-1);
for (let i = 0; i < B64_ALPHABET.length; i++) B64_LOOKUP[B64_ALPHABET.charCodeAt(i)] = i;

export function base64ToBytes(b64: string): Uint8Array {
  const clean = b64.replace(/=+$/, "");
  const out = new Uint8Array(Math.floor((clean.length * 3) / 4));
  let buffer = 0;
  let bits = 0;
  let k = 0;
  for (let i = 0; i < clean.length; i++) {
    const value = B64_LOOKUP[clean.charCodeAt(i)];
    if (value < 0) throw new Error(`invalid base64 character at ${i}`);
    buffer = (buffer << 6) | value;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out[k++] = (buffer >> bits) & 0xff;
    }
  }
  return out;
}

export function bytesToBase64(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i += 3) {
    const a = bytes[i];
    const b = i + 1 < bytes.length ? bytes[i + 1] : 0;
    const c = i + 2 < bytes.length ? bytes[i + 2] : 0;
    const triple = (a << 16) | (b << 8) | c;
    out += B64_ALPHABET[(triple >> 18) & 63];
    out += B64_ALPHABET[(triple >> 12) & 63];
    out += i + 1 < bytes.length ? B64_ALPHABET[(triple >> 6) & 63] : "=";
    out += i + 2 < bytes.length ? B64_ALPHABET[triple & 63] : "=";
  }
  return out;
}

export function decodeF32(payload: RasterPayload): Float32Array {
  if (payload.dtype !== "<f4") throw new Error(`unsupported dtype ${payload.dtype}`);
  const bytes = base64ToBytes(payload.b64);
  const expected = payload.shape.reduce((a, b) => a * b, 1) * 4;
  if (bytes.byteLength !== expected) {
    throw new Error(`raster byte length ${bytes.byteLength}, expected ${expected}`);
  }
  const copy = new Uint8Array(bytes); // align to a fresh buffer
  return new Float32Array(copy.buffer);
}

export function encodeF32(values: Float32Array, shape: number[]): RasterPayload {
  return {
    b64: bytesToBase64(new Uint8Array(values.buffer, values.byteOffset, values.byteLength)),
    dtype: "<f4",
    shape,
  };
}

/** FNV-1a over the raw bytes; stable across calls for identical buffers. */
export function checksum(values: Float32Array): number {
  const bytes = new Uint8Array(values.buffer, values.byteOffset, values.byteLength);
  let h = 0x811c9dc5;
  for (let i = 0; i < bytes.length; i++) {
    h ^= bytes[i];
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

/** Checksum of the pixels OUTSIDE the rect (row-major raster of given width). */
export function checksumOutside(values: Float32Array, width: number, height: number,
                                roi: Rect): number {
  const out = new Float32Array(width * height - roi.w * roi.h);
  let k = 0;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const inside = x >= roi.x && x < roi.x + roi.w && y >= roi.y && y < roi.y + roi.h;
      if (!inside) out[k++] = values[y * width + x];
    }
  }
  return checksum(out);
}

/** Bit-exact equality of two rasters outside the rect. */
export function outsideRegionEqual(a: Float32Array, b: Float32Array, width: number,
                                   height: number, roi: Rect): boolean {
  if (a.length !== b.length || a.length !== width * height) return false;
  return checksumOutside(a, width, height, roi) === checksumOutside(b, width, height, roi)
    && everyOutside(a, b, width, height, roi);
}

function everyOutside(a: Float32Array, b: Float32Array, width: number, height: number,
                      roi: Rect): boolean {
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const inside = x >= roi.x && x < roi.x + roi.w && y >= roi.y && y < roi.y + roi.h;
      if (!inside && !Object.is(a[y * width + x], b[y * width + x])) return false;
    }
  }
  return true;
}
