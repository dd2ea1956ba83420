// Raster compositing for canvas display. Display dims pixels outside the
// ROI; the underlying data buffers are never modified, and sample buffers
// are verified bit-identical to the tile layer outside the ROI.

import { applyColormap, ColormapName } from "./colormap.js";
import { outsideRegionEqual } from "./decode.js";
import { roiContains } from "./roi.js";
import type { Rect } from "./types.js";

export interface CompositeResult {
  pixels: Uint8ClampedArray; // RGBA, row-major
  width: number;
  height: number;
  conservationOk: boolean; // outside-ROI data identical to the reference
}

const DIM_FACTOR = 0.45;

export function compositeSample(sample: Float32Array, reference: Float32Array,
                                width: number, height: number, roi: Rect,
                                cmap: ColormapName, lo: number,
                                hi: number): CompositeResult {
  const conservationOk = outsideRegionEqual(sample, reference, width, height, roi);
  const pixels = applyColormap(sample, cmap, lo, hi);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (!roiContains(roi, x, y)) {
        const i = 4 * (y * width + x);
        pixels[i] = Math.round(pixels[i] * DIM_FACTOR);
        pixels[i + 1] = Math.round(pixels[i + 1] * DIM_FACTOR);
        pixels[i + 2] = Math.round(pixels[i + 2] * DIM_FACTOR);
      }
    }
  }
  return { pixels, width, height, conservationOk };
}

export function rasterPixels(values: Float32Array, cmap: ColormapName,
                             lo: number, hi: number): Uint8ClampedArray {
  return applyColormap(values, cmap, lo, hi);
}

/** Nearest-pixel readout for hover tooltips; returns null off-raster. */
export function valueAt(values: Float32Array, width: number, height: number,
                        x: number, y: number): number | null {
  const xi = Math.floor(x);
  const yi = Math.floor(y);
  if (xi < 0 || yi < 0 || xi >= width || yi >= height) return null;
  return values[yi * width + xi];
}

/** Display-side k x k block averaging (the coarsened-conditioning layer). */
export function blockCoarsen(values: Float32Array, width: number, height: number,
                             k: number): Float32Array {
  const kk = Math.max(1, Math.min(k, width, height));
  if (kk === 1) return values.slice();
  const out = new Float32Array(values.length);
  for (let by = 0; by < height; by += kk) {
    for (let bx = 0; bx < width; bx += kk) {
      const h = Math.min(kk, height - by);
      const w = Math.min(kk, width - bx);
      let sum = 0;
      for (let y = by; y < by + h; y++) {
        for (let x = bx; x < bx + w; x++) sum += values[y * width + x];
      }
      const mean = sum / (w * h);
      for (let y = by; y < by + h; y++) {
        for (let x = bx; x < bx + w; x++) out[y * width + x] = mean;
      }
    }
  }
  return out;
}
