// Test-side stand-ins for what the browser does natively: PNG decoding
// (canvas) and file handling. Also a minimal NRRD builder/parser pair for
// fixture volumes, independent of the server's implementation.

import { inflateSync } from "node:zlib";

import { Surface, surfaceFromGray } from "../src/raster.js";

// --- NRRD (int16, raw, little-endian, attached header) ---

export interface NrrdFixture {
  nx: number;
  ny: number;
  nz: number;
  values: Int16Array; // z-major, y, then x fastest
  bytes: Uint8Array;
}

export function buildNrrd(
  nx: number,
  ny: number,
  nz: number,
  value: (x: number, y: number, z: number) => number,
): NrrdFixture {
  const values = new Int16Array(nx * ny * nz);
  let i = 0;
  for (let z = 0; z < nz; z++) {
    for (let y = 0; y < ny; y++) {
      for (let x = 0; x < nx; x++) {
        values[i++] = value(x, y, z);
      }
    }
  }
  const header =
    `NRRD0004\ntype: int16\ndimension: 3\nsizes: ${nx} ${ny} ${nz}\n` +
    "endian: little\nencoding: raw\n\n";
  const head = new TextEncoder().encode(header);
  const payload = new Uint8Array(values.buffer.slice(0)); // platform LE assumed
  const bytes = new Uint8Array(head.length + payload.length);
  bytes.set(head, 0);
  bytes.set(payload, head.length);
  return { nx, ny, nz, values, bytes };
}

export function parseNrrdInt16(bytes: Uint8Array): { sizes: number[]; values: Int16Array } {
  const text = new TextDecoder("latin1").decode(bytes);
  const headerEnd = text.indexOf("\n\n");
  if (headerEnd < 0) throw new Error("no header terminator");
  const header = text.slice(0, headerEnd);
  const fields = new Map<string, string>();
  for (const line of header.split("\n").slice(1)) {
    const sep = line.indexOf(":");
    if (sep > 0) fields.set(line.slice(0, sep).trim(), line.slice(sep + 1).trim());
  }
  if (fields.get("type") !== "int16") throw new Error(`unexpected type ${fields.get("type")}`);
  if (fields.get("encoding") !== "raw") throw new Error("expected raw encoding");
  const sizes = (fields.get("sizes") ?? "").split(/\s+/).map(Number);
  const count = sizes.reduce((a, b) => a * b, 1);
  const dataStart = headerEnd + 2;
  const view = bytes.slice(dataStart, dataStart + count * 2);
  return { sizes, values: new Int16Array(view.buffer, view.byteOffset, count) };
}

// --- minimal PNG decoder (8-bit grayscale, non-interlaced) ---

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

export function decodeGrayPng(png: Uint8Array): { width: number; height: number; gray: Uint8Array } {
  const sig = [137, 80, 78, 71, 13, 10, 26, 10];
  for (let i = 0; i < 8; i++) {
    if (png[i] !== sig[i]) throw new Error("not a PNG");
  }
  const view = new DataView(png.buffer, png.byteOffset, png.byteLength);
  let pos = 8;
  let width = 0, height = 0, bitDepth = 0, colorType = -1;
  const idat: Uint8Array[] = [];
  while (pos < png.length) {
    const length = view.getUint32(pos);
    const type = new TextDecoder("latin1").decode(png.subarray(pos + 4, pos + 8));
    const data = png.subarray(pos + 8, pos + 8 + length);
    if (type === "IHDR") {
      const dv = new DataView(data.buffer, data.byteOffset, data.byteLength);
      width = dv.getUint32(0);
      height = dv.getUint32(4);
      bitDepth = data[8];
      colorType = data[9];
      if (data[12] !== 0) throw new Error("interlaced PNG unsupported");
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    pos += 12 + length;
  }
  if (bitDepth !== 8 || colorType !== 0) {
    throw new Error(`decoder handles 8-bit gray only, got depth ${bitDepth} type ${colorType}`);
  }
  const compressed = new Uint8Array(idat.reduce((n, c) => n + c.length, 0));
  let off = 0;
  for (const chunk of idat) {
    compressed.set(chunk, off);
    off += chunk.length;
  }
  const raw = inflateSync(compressed);
  const stride = width + 1;
  const gray = new Uint8Array(width * height);
  const prior = new Uint8Array(width);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * stride];
    const line = raw.subarray(y * stride + 1, y * stride + 1 + width);
    const out = gray.subarray(y * width, (y + 1) * width);
    for (let x = 0; x < width; x++) {
      const rawByte = line[x];
      const left = x > 0 ? out[x - 1] : 0;
      const above = prior[x];
      const upperLeft = x > 0 ? prior[x - 1] : 0;
      let value: number;
      switch (filter) {
        case 0: value = rawByte; break;
        case 1: value = rawByte + left; break;
        case 2: value = rawByte + above; break;
        case 3: value = rawByte + Math.floor((left + above) / 2); break;
        case 4: value = rawByte + paeth(left, above, upperLeft); break;
        default: throw new Error(`unknown PNG filter ${filter}`);
      }
      out[x] = value & 0xff;
    }
    prior.set(out);
  }
  return { width, height, gray };
}

export async function decodeSlicePngForTests(png: Uint8Array): Promise<Surface> {
  const { width, height, gray } = decodeGrayPng(png);
  return surfaceFromGray(gray, width, height);
}
