// Request assembly: project the ROI subregions of the slice and mask
// layers onto a 100x100 auxiliary surface and read them out as the flat
// RGBA arrays the gateway expects.

import {
  Surface,
  crop,
  downsampleAreaGray,
  downsampleMaskCoverage,
  surfaceFromGray,
  toFlat,
} from "./raster.js";
import { Roi, ROI_NATIVE_SIZE } from "./state.js";

export interface InpaintRequestPayload {
  uid: string;
  image: number[]; // 40000 ints, 100x100 RGBA row-major
  mask: number[];
}

export function generateUid(): string {
  const bytes = new Uint8Array(16);
  if (globalThis.crypto?.getRandomValues) {
    globalThis.crypto.getRandomValues(bytes);
  } else {
    for (let i = 0; i < bytes.length; i++) bytes[i] = Math.floor(Math.random() * 256);
  }
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

function roiCrop(layer: Surface, roi: Roi): Surface {
  const extent = Math.round(roi.displayExtent);
  return crop(layer, roi.displayX, roi.displayY, extent, extent);
}

/**
 * Build the wire payload from the display layers. Both layers are
 * cropped to the ROI rectangle and reduced to 100x100 by the display
 * scale: area means for the image, coverage >= 0.5 for the mask. Mask
 * pixels come out pure red with opaque alpha, satisfying the server's
 * "red nonzero" rule; anything drawn outside the ROI is simply never
 * sampled.
 */
export function buildRequest(baseLayer: Surface, maskLayer: Surface, roi: Roi): InpaintRequestPayload {
  const size = ROI_NATIVE_SIZE;
  const imageGray = downsampleAreaGray(roiCrop(baseLayer, roi), size, size);
  const maskGray = downsampleMaskCoverage(roiCrop(maskLayer, roi), size, size);

  const image = toFlat(surfaceFromGray(imageGray, size, size));
  const mask = new Array<number>(size * size * 4).fill(0);
  for (let i = 0; i < maskGray.length; i++) {
    if (maskGray[i] !== 0) {
      mask[i * 4] = 255;
      mask[i * 4 + 3] = 255;
    }
  }
  return { uid: generateUid(), image, mask };
}
