// RGBA surface model mirroring canvas ImageData: row-major bytes, four
// channels per pixel. All drawing-surface math lives here so it can run
// (and be tested) without a DOM; the ui layer blits surfaces into real
// canvases.

export interface Surface {
  width: number;
  height: number;
  data: Uint8ClampedArray; // length === width * height * 4
}

export interface Rgba {
  r: number;
  g: number;
  b: number;
  a: number;
}

export const MASK_STROKE: Rgba = { r: 255, g: 0, b: 0, a: 128 };

export function createSurface(width: number, height: number): Surface {
  return { width, height, data: new Uint8ClampedArray(width * height * 4) };
}

export function cloneSurface(src: Surface): Surface {
  return { width: src.width, height: src.height, data: new Uint8ClampedArray(src.data) };
}

export function surfaceFromGray(gray: Uint8Array | Uint8ClampedArray, width: number, height: number): Surface {
  const out = createSurface(width, height);
  for (let i = 0; i < width * height; i++) {
    const v = gray[i];
    out.data[i * 4] = v;
    out.data[i * 4 + 1] = v;
    out.data[i * 4 + 2] = v;
    out.data[i * 4 + 3] = 255;
  }
  return out;
}

export function surfaceFromFlat(flat: ArrayLike<number>, width: number, height: number): Surface {
  if (flat.length !== width * height * 4) {
    throw new Error(`flat array length ${flat.length} != ${width}x${height}x4`);
  }
  const out = createSurface(width, height);
  out.data.set(flat as ArrayLike<number>);
  return out;
}

export function toFlat(surface: Surface): number[] {
  return Array.from(surface.data);
}

/** Stamp a filled circle of the given diameter. */
export function fillCircle(surface: Surface, cx: number, cy: number, diameter: number, color: Rgba): void {
  const radius = diameter / 2;
  const r2 = radius * radius;
  const x0 = Math.max(0, Math.floor(cx - radius));
  const x1 = Math.min(surface.width - 1, Math.ceil(cx + radius));
  const y0 = Math.max(0, Math.floor(cy - radius));
  const y1 = Math.min(surface.height - 1, Math.ceil(cy + radius));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        const i = (y * surface.width + x) * 4;
        surface.data[i] = color.r;
        surface.data[i + 1] = color.g;
        surface.data[i + 2] = color.b;
        surface.data[i + 3] = color.a;
      }
    }
  }
}

/** Clear the same footprint fillCircle would stamp. */
export function clearCircle(surface: Surface, cx: number, cy: number, diameter: number): void {
  fillCircle(surface, cx, cy, diameter, { r: 0, g: 0, b: 0, a: 0 });
}

export function crop(src: Surface, x: number, y: number, width: number, height: number): Surface {
  const out = createSurface(width, height);
  for (let row = 0; row < height; row++) {
    const srcStart = ((y + row) * src.width + x) * 4;
    out.data.set(src.data.subarray(srcStart, srcStart + width * 4), row * width * 4);
  }
  return out;
}

/** Nearest-neighbor enlargement, the display-side scaling rule. */
export function upsampleNearest(src: Surface, scale: number): Surface {
  const outW = Math.max(1, Math.round(src.width * scale));
  const outH = Math.max(1, Math.round(src.height * scale));
  const out = createSurface(outW, outH);
  for (let y = 0; y < outH; y++) {
    const sy = Math.min(src.height - 1, Math.floor(y / scale));
    for (let x = 0; x < outW; x++) {
      const sx = Math.min(src.width - 1, Math.floor(x / scale));
      const si = (sy * src.width + sx) * 4;
      const di = (y * outW + x) * 4;
      out.data[di] = src.data[si];
      out.data[di + 1] = src.data[si + 1];
      out.data[di + 2] = src.data[si + 2];
      out.data[di + 3] = src.data[si + 3];
    }
  }
  return out;
}

function overlapWeights(srcLen: number, dstLen: number): number[][] {
  const ratio = srcLen / dstLen;
  const rows: number[][] = [];
  for (let i = 0; i < dstLen; i++) {
    const lo = i * ratio;
    const hi = (i + 1) * ratio;
    const row = new Array<number>(srcLen).fill(0);
    for (let j = Math.floor(lo); j < Math.min(srcLen, Math.ceil(hi)); j++) {
      row[j] = Math.max(0, Math.min(j + 1, hi) - Math.max(j, lo));
    }
    rows.push(row);
  }
  return rows;
}

/**
 * Exact area-mean reduction of the red channel (the projection onto the
 * 100x100 auxiliary surface for the image payload). Source is expected
 * gray (R==G==B), as the slice layer always is.
 */
export function downsampleAreaGray(src: Surface, targetW: number, targetH: number): Uint8Array {
  if (targetW > src.width || targetH > src.height) {
    throw new Error("downsampleAreaGray cannot upscale");
  }
  const wx = overlapWeights(src.width, targetW);
  const wy = overlapWeights(src.height, targetH);
  const area = (src.width / targetW) * (src.height / targetH);
  const out = new Uint8Array(targetW * targetH);
  // column partial sums per target row keep this O(n^2) instead of O(n^3)
  for (let ty = 0; ty < targetH; ty++) {
    const rowWeights = wy[ty];
    const colSums = new Float64Array(src.width);
    for (let sy = 0; sy < src.height; sy++) {
      const w = rowWeights[sy];
      if (w === 0) continue;
      for (let sx = 0; sx < src.width; sx++) {
        colSums[sx] += w * src.data[(sy * src.width + sx) * 4];
      }
    }
    for (let tx = 0; tx < targetW; tx++) {
      const colWeights = wx[tx];
      let acc = 0;
      for (let sx = 0; sx < src.width; sx++) {
        if (colWeights[sx] !== 0) acc += colWeights[sx] * colSums[sx];
      }
      out[ty * targetW + tx] = Math.min(255, Math.max(0, Math.floor(acc / area + 0.5)));
    }
  }
  return out;
}

/**
 * Mask projection: a target pixel is masked when stroke coverage
 * (red channel nonzero) reaches half its footprint. Output is 0/255.
 */
export function downsampleMaskCoverage(src: Surface, targetW: number, targetH: number): Uint8Array {
  if (targetW > src.width || targetH > src.height) {
    throw new Error("downsampleMaskCoverage cannot upscale");
  }
  const wx = overlapWeights(src.width, targetW);
  const wy = overlapWeights(src.height, targetH);
  const area = (src.width / targetW) * (src.height / targetH);
  const out = new Uint8Array(targetW * targetH);
  for (let ty = 0; ty < targetH; ty++) {
    const rowWeights = wy[ty];
    const colSums = new Float64Array(src.width);
    for (let sy = 0; sy < src.height; sy++) {
      const w = rowWeights[sy];
      if (w === 0) continue;
      for (let sx = 0; sx < src.width; sx++) {
        if (src.data[(sy * src.width + sx) * 4] !== 0) colSums[sx] += w;
      }
    }
    for (let tx = 0; tx < targetW; tx++) {
      const colWeights = wx[tx];
      let acc = 0;
      for (let sx = 0; sx < src.width; sx++) {
        if (colWeights[sx] !== 0) acc += colWeights[sx] * colSums[sx];
      }
      out[ty * targetW + tx] = acc / area >= 0.5 ? 255 : 0;
    }
  }
  return out;
}

/** Count pixels with a nonzero red channel (mask presence test). */
export function countMarked(surface: Surface): number {
  let n = 0;
  for (let i = 0; i < surface.data.length; i += 4) {
    if (surface.data[i] !== 0) n++;
  }
  return n;
}

/** Paste src into dst with its top-left corner at (x, y), overwriting. */
export function blit(dst: Surface, src: Surface, x: number, y: number): void {
  for (let row = 0; row < src.height; row++) {
    const dy = y + row;
    if (dy < 0 || dy >= dst.height) continue;
    for (let col = 0; col < src.width; col++) {
      const dx = x + col;
      if (dx < 0 || dx >= dst.width) continue;
      const si = (row * src.width + col) * 4;
      const di = (dy * dst.width + dx) * 4;
      dst.data[di] = src.data[si];
      dst.data[di + 1] = src.data[si + 1];
      dst.data[di + 2] = src.data[si + 2];
      dst.data[di + 3] = src.data[si + 3];
    }
  }
}
