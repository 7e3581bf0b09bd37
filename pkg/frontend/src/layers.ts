// Drawing-surface stack for the primary view, bottom to top:
//   base slice layer | ROI/result layer | mask layer (half transparent) |
//   cursor layer.
// Mask drawings are kept per slice so the request builder can scan the
// stack for the first slice that has one. The cursor layer is never read
// back into any payload.

import {
  MASK_STROKE,
  Surface,
  clearCircle,
  cloneSurface,
  countMarked,
  createSurface,
  fillCircle,
} from "./raster.js";
import { BrushMode } from "./state.js";

export interface Point {
  x: number;
  y: number;
}

export class LayerStack {
  readonly width: number;
  readonly height: number;
  base: Surface;
  result: Surface;
  cursor: Surface;
  private masks = new Map<number, Surface>();

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
    this.base = createSurface(width, height);
    this.result = createSurface(width, height);
    this.cursor = createSurface(width, height);
  }

  maskLayer(sliceIndex: number): Surface {
    let layer = this.masks.get(sliceIndex);
    if (!layer) {
      layer = createSurface(this.width, this.height);
      this.masks.set(sliceIndex, layer);
    }
    return layer;
  }

  /** Stamp or erase brush circles along a pointer path. */
  applyStroke(sliceIndex: number, path: Point[], size: number, mode: BrushMode): void {
    const layer = this.maskLayer(sliceIndex);
    for (const p of path) {
      if (mode === "draw") {
        fillCircle(layer, p.x, p.y, size, MASK_STROKE);
      } else {
        clearCircle(layer, p.x, p.y, size);
      }
    }
  }

  /**
   * Lowest slice index whose mask layer holds at least one marked pixel
   * (red channel nonzero); undefined when nothing is drawn anywhere.
   */
  findMaskedSlice(): number | undefined {
    const indexes = [...this.masks.keys()].sort((a, b) => a - b);
    for (const k of indexes) {
      const layer = this.masks.get(k)!;
      if (countMarked(layer) > 0) return k;
    }
    return undefined;
  }

  maskPixelCount(sliceIndex: number): number {
    const layer = this.masks.get(sliceIndex);
    return layer ? countMarked(layer) : 0;
  }

  clearMask(sliceIndex: number): void {
    this.masks.delete(sliceIndex);
  }

  clearAllMasks(): void {
    this.masks.clear();
  }

  clearResult(): void {
    this.result = createSurface(this.width, this.height);
  }

  snapshotMask(sliceIndex: number): Surface {
    return cloneSurface(this.maskLayer(sliceIndex));
  }
}
