import { describe, expect, it } from "vitest";

import { applyColormap, sampleColormap, valueRange } from "../src/colormap.js";
import { blockCoarsen, compositeSample, valueAt } from "../src/render.js";

describe("colormap", () => {
  it("clamps out-of-range values to the endpoints", () => {
    expect(sampleColormap("ndvi", -5)).toEqual(sampleColormap("ndvi", 0));
    expect(sampleColormap("ndvi", 5)).toEqual(sampleColormap("ndvi", 1));
  });

  it("produces opaque RGBA for every pixel", () => {
    const values = new Float32Array([0, 0.5, 1, -1]);
    const rgba = applyColormap(values, "ndvi", -1, 1);
    expect(rgba).toHaveLength(16);
    expect(rgba[3]).toBe(255);
    expect(rgba[15]).toBe(255);
  });

  it("valueRange finds extremes", () => {
    expect(valueRange(new Float32Array([3, -2, 7, 0]))).toEqual([-2, 7]);
  });
});

describe("compositeSample", () => {
  const width = 8;
  const height = 8;
  const roi = { x: 2, y: 2, w: 3, h: 3 };

  function reference(): Float32Array {
    const ref = new Float32Array(width * height);
    for (let i = 0; i < ref.length; i++) ref[i] = (i % 7) / 7 - 0.5;
    return ref;
  }

  it("dims outside pixels in the view without touching the data", () => {
    const ref = reference();
    const sample = new Float32Array(ref);
    sample[3 * width + 3] = 0.9; // inside ROI
    const out = compositeSample(sample, ref, width, height, roi, "ndvi", -1, 1);
    expect(out.conservationOk).toBe(true);
    // data untouched by rendering
    expect(sample[0]).toBe(ref[0]);
    // outside pixel dimmed relative to its undimmed color
    const plain = applyColormap(sample, "ndvi", -1, 1);
    expect(out.pixels[0]).toBeLessThan(plain[0]);
    // inside pixel left at full brightness
    const insideIdx = 4 * (3 * width + 3);
    expect(out.pixels[insideIdx]).toBe(plain[insideIdx]);
  });

  it("flags outside-ROI data mutations", () => {
    const ref = reference();
    const sample = new Float32Array(ref);
    sample[0] += 0.25; // outside the ROI
    const out = compositeSample(sample, ref, width, height, roi, "ndvi", -1, 1);
    expect(out.conservationOk).toBe(false);
  });
});

describe("valueAt", () => {
  it("reads the nearest pixel and rejects off-raster positions", () => {
    const values = new Float32Array([1, 2, 3, 4]);
    expect(valueAt(values, 2, 2, 0.9, 0.1)).toBe(1);
    expect(valueAt(values, 2, 2, 1.2, 1.8)).toBe(4);
    expect(valueAt(values, 2, 2, -1, 0)).toBeNull();
    expect(valueAt(values, 2, 2, 2, 0)).toBeNull();
  });
});

describe("blockCoarsen", () => {
  it("makes k x k blocks constant at their mean", () => {
    const values = new Float32Array([1, 3, 5, 7, 2, 4, 6, 8, 1, 1, 2, 2, 3, 3, 4, 4]);
    const out = blockCoarsen(values, 4, 4, 2);
    expect(out[0]).toBeCloseTo((1 + 3 + 2 + 4) / 4, 6);
    expect(out[0]).toBe(out[1]);
    expect(out[0]).toBe(out[4]);
    expect(out[0]).toBe(out[5]);
  });

  it("k=1 copies the input", () => {
    const values = new Float32Array([1, 2, 3, 4]);
    const out = blockCoarsen(values, 2, 2, 1);
    expect(out).toEqual(values);
    expect(out).not.toBe(values);
  });
});
