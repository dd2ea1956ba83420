// ROI geometry: drag-to-draw, integer snapping and in-bounds clamping.

import type { Rect } from "./types.js";

export function centeredRoi(width: number, height: number, size = 32): Rect {
  const s = Math.min(size, width, height);
  return {
    x: Math.floor((width - s) / 2),
    y: Math.floor((height - s) / 2),
    w: s,
    h: s,
  };
}

/** Normalize a drag gesture (any corner order) into a positive-extent rect. */
export function dragToRect(x0: number, y0: number, x1: number, y1: number): Rect {
  const x = Math.min(x0, x1);
  const y = Math.min(y0, y1);
  return {
    x: Math.round(x),
    y: Math.round(y),
    w: Math.max(1, Math.round(Math.abs(x1 - x0))),
    h: Math.max(1, Math.round(Math.abs(y1 - y0))),
  };
}

/** Snap to integer pixels and clamp fully inside a width x height raster. */
export function clampRoi(roi: Rect, width: number, height: number): Rect {
  let w = Math.max(1, Math.min(Math.round(roi.w), width));
  let h = Math.max(1, Math.min(Math.round(roi.h), height));
  let x = Math.max(0, Math.min(Math.round(roi.x), width - w));
  let y = Math.max(0, Math.min(Math.round(roi.y), height - h));
  return { x, y, w, h };
}

/** Human-readable problem with the ROI, or null when valid. */
export function roiProblem(roi: Rect, width: number, height: number): string | null {
  if (!Number.isInteger(roi.x) || !Number.isInteger(roi.y)
    || !Number.isInteger(roi.w) || !Number.isInteger(roi.h)) {
    return "ROI must be integer pixels";
  }
  if (roi.w < 1 || roi.h < 1) return "ROI must have positive size";
  if (roi.x < 0 || roi.y < 0 || roi.x + roi.w > width || roi.y + roi.h > height) {
    return `ROI exceeds the ${width}×${height} tile`;
  }
  return null;
}

export function roiContains(roi: Rect, x: number, y: number): boolean {
  return x >= roi.x && x < roi.x + roi.w && y >= roi.y && y < roi.y + roi.h;
}
