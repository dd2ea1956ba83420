// Client-side colormaps so layer toggles and hover readouts need no server
// round trips. Stops are sampled from the matplotlib maps the service uses
// for its own previews.

export type Rgb = [number, number, number];

const RDYLGN: Rgb[] = [
  [165, 0, 38], [215, 48, 39], [244, 109, 67], [253, 174, 97], [254, 224, 139],
  [255, 255, 191], [217, 239, 139], [166, 217, 106], [102, 189, 99],
  [26, 152, 80], [0, 104, 55],
];

const INFERNO: Rgb[] = [
  [0, 0, 4], [22, 11, 57], [66, 10, 104], [106, 23, 110], [147, 38, 103],
  [188, 55, 84], [221, 81, 58], [243, 120, 25], [252, 165, 10], [246, 215, 70],
  [252, 255, 164],
];

const CIVIDIS: Rgb[] = [
  [0, 32, 76], [0, 42, 102], [6, 52, 110], [39, 63, 108], [60, 74, 107],
  [78, 85, 107], [95, 96, 109], [113, 108, 109], [132, 120, 107], [152, 133, 100],
  [173, 146, 91], [194, 160, 79], [216, 175, 61], [239, 190, 38], [255, 204, 0],
];

const MAPS = { ndvi: RDYLGN, lst: INFERNO, bh: CIVIDIS, cond: INFERNO, lst_pred: INFERNO };

export type ColormapName = keyof typeof MAPS;

/** Piecewise-linear interpolation through the stops; t clamped to [0, 1]. */
export function sampleColormap(name: ColormapName, t: number): Rgb {
  const stops = MAPS[name];
  const clamped = Math.min(1, Math.max(0, t));
  const pos = clamped * (stops.length - 1);
  const lo = Math.floor(pos);
  const hi = Math.min(stops.length - 1, lo + 1);
  const frac = pos - lo;
  return [0, 1, 2].map(
    (c) => Math.round(stops[lo][c] + frac * (stops[hi][c] - stops[lo][c])),
  ) as Rgb;
}

/** RGBA pixels for a raster under the named map and value range. */
export function applyColormap(values: Float32Array, name: ColormapName,
                              lo: number, hi: number): Uint8ClampedArray {
  const span = hi > lo ? hi - lo : 1;
  const out = new Uint8ClampedArray(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    const [r, g, b] = sampleColormap(name, (values[i] - lo) / span);
    out[4 * i] = r;
    out[4 * i + 1] = g;
    out[4 * i + 2] = b;
    out[4 * i + 3] = 255;
  }
  return out;
}

export function valueRange(values: Float32Array): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return [lo, hi];
}
