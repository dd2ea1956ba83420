// DOM wiring: tile browser, ROI editing, controls and the results gallery.

import { ApiClient, ApiError } from "./api.js";
import { valueRange } from "./colormap.js";
import { decodeF32 } from "./decode.js";
import { buildGallery, cardToPin, GalleryModel } from "./gallery.js";
import { blockCoarsen, compositeSample, rasterPixels, valueAt } from "./render.js";
import { clampRoi, dragToRect, roiProblem } from "./roi.js";
import {
  acceptResponse,
  beginGeneration,
  buildGenerateRequest,
  failGeneration,
  GAINS,
  initialState,
  LayerName,
  selectTile,
  SessionState,
  setDeltaTarget,
  setGain,
  togglePin,
} from "./state.js";
import type { Rect, TileDetail } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const api = new ApiClient("");
let state: SessionState = initialState();
let tile: TileDetail | null = null;
let rasters: { ndvi: Float32Array; lst: Float32Array; bh: Float32Array } | null = null;
let gallery: GalleryModel | null = null;
let selectedCard = 0;
const SCALE = 4;
const COND_K = 32;

function setStatus(text: string, isError = false): void {
  const el = $("status");
  el.textContent = text;
  el.className = isError ? "status error" : "status";
}

async function loadTileList(): Promise<void> {
  try {
    const listing = await api.tiles();
    const grid = $("tile-grid");
    grid.innerHTML = "";
    for (const summary of listing.tiles) {
      const card = document.createElement("button");
      card.className = "tile-card";
      card.innerHTML = `<strong>${summary.tile_id}</strong>` +
        `<span>${summary.city_id} · ${summary.acquisition_date}</span>`;
      card.addEventListener("click", () => void loadTile(summary.tile_id));
      grid.appendChild(card);
    }
    setStatus(`${listing.count} tiles available`);
    $("retry-banner").hidden = true;
  } catch (err) {
    $("retry-banner").hidden = false;
    setStatus(err instanceof Error ? err.message : "service unreachable", true);
  }
}

async function loadTile(tileId: string): Promise<void> {
  tile = await api.tile(tileId);
  rasters = {
    ndvi: decodeF32(tile.channels.ndvi),
    lst: decodeF32(tile.channels.lst),
    bh: decodeF32(tile.channels.bh),
  };
  const [h, w] = tile.shape;
  state = selectTile(state, tileId, [h, w]);
  gallery = null;
  $("selected-tile").textContent = `${tile.tile_id} (${tile.city_id}, ` +
    `${tile.acquisition_date})`;
  drawMainCanvas();
  syncControls();
}

function activeLayer(): { values: Float32Array; cmap: LayerName; lo: number; hi: number;
                          unit: string } | null {
  if (!tile || !rasters) return null;
  const [h, w] = tile.shape;
  switch (state.layer) {
    case "ndvi":
      return { values: rasters.ndvi, cmap: "ndvi", lo: -1, hi: 1, unit: "" };
    case "lst": {
      const [lo, hi] = valueRange(rasters.lst);
      return { values: rasters.lst, cmap: "lst", lo, hi, unit: " °C" };
    }
    case "bh": {
      const [, hi] = valueRange(rasters.bh);
      return { values: rasters.bh, cmap: "bh", lo: 0, hi: Math.max(hi, 1), unit: " m" };
    }
    case "cond": {
      const coarse = blockCoarsen(rasters.lst, w, h, COND_K);
      const [lo, hi] = valueRange(coarse);
      return { values: coarse, cmap: "cond", lo, hi, unit: " °C" };
    }
    case "lst_pred": {
      if (!gallery) return null;
      const card = gallery.cards[selectedCard] ?? gallery.cards[0];
      const [lo, hi] = valueRange(card.lstPred);
      return { values: card.lstPred, cmap: "lst_pred", lo, hi, unit: " °C" };
    }
  }
}

function drawMainCanvas(): void {
  const canvas = $("main-canvas") as unknown as HTMLCanvasElement;
  const layer = activeLayer();
  if (!tile || !layer) return;
  const [h, w] = tile.shape;
  canvas.width = w * SCALE;
  canvas.height = h * SCALE;
  const ctx = canvas.getContext("2d")!;
  const image = new ImageData(
    new Uint8ClampedArray(rasterPixels(layer.values, layer.cmap, layer.lo, layer.hi)),
    w, h);
  const off = new OffscreenCanvas(w, h);
  off.getContext("2d")!.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, w * SCALE, h * SCALE);

  ctx.strokeStyle = "#00e5ff";
  ctx.lineWidth = 2;
  ctx.strokeRect(state.roi.x * SCALE, state.roi.y * SCALE,
                 state.roi.w * SCALE, state.roi.h * SCALE);
  $("legend").textContent = `${state.layer}: ${layer.lo.toFixed(2)}${layer.unit} ` +
    `→ ${layer.hi.toFixed(2)}${layer.unit}`;
}

function syncControls(): void {
  ($("delta-slider") as unknown as HTMLInputElement).value = String(state.deltaTarget);
  $("delta-value").textContent = `${state.deltaTarget >= 0 ? "+" : ""}` +
    `${state.deltaTarget.toFixed(1)} °C`;
  ($("num-samples") as unknown as HTMLInputElement).value = String(state.numSamples);
  ($("seed-input") as unknown as HTMLInputElement).value = String(state.seed);
  ($("seed-lock") as unknown as HTMLInputElement).checked = state.seedLocked;
  for (const gain of GAINS) {
    const btn = $(`gain-${gain}`);
    btn.className = state.gain === gain && !state.customGainEnabled
      ? "gain active" : "gain";
  }
  const problem = tile
    ? roiProblem(state.roi, tile.shape[1], tile.shape[0])
    : "select a tile first";
  $("roi-problem").textContent = problem ?? "";
  const button = $("generate-btn") as unknown as HTMLButtonElement;
  button.disabled = problem !== null || state.inFlightId !== null;
  $("roi-readout").textContent =
    `ROI ${state.roi.x},${state.roi.y} ${state.roi.w}×${state.roi.h}`;
}

function wireRoiDrag(): void {
  const canvas = $("main-canvas") as unknown as HTMLCanvasElement;
  let dragStart: { x: number; y: number } | null = null;

  const toPixel = (ev: MouseEvent): { x: number; y: number } => {
    const rect = canvas.getBoundingClientRect();
    return {
      x: (ev.clientX - rect.left) / SCALE,
      y: (ev.clientY - rect.top) / SCALE,
    };
  };

  canvas.addEventListener("mousedown", (ev) => {
    dragStart = toPixel(ev);
  });
  canvas.addEventListener("mousemove", (ev) => {
    const pos = toPixel(ev);
    if (dragStart && tile) {
      const [h, w] = tile.shape;
      state = { ...state, roi: clampRoi(dragToRect(dragStart.x, dragStart.y, pos.x, pos.y), w, h) };
      drawMainCanvas();
      syncControls();
    }
    const layer = activeLayer();
    if (layer && tile) {
      const value = valueAt(layer.values, tile.shape[1], tile.shape[0], pos.x, pos.y);
      $("hover-readout").textContent = value === null
        ? "" : `(${Math.floor(pos.x)}, ${Math.floor(pos.y)}) = ${value.toFixed(3)}${layer.unit}`;
    }
  });
  window.addEventListener("mouseup", () => {
    dragStart = null;
  });
}

async function onGenerate(): Promise<void> {
  if (!tile || !rasters) return;
  const body = buildGenerateRequest(state);
  const [next, requestId] = beginGeneration(state);
  state = next;
  syncControls();
  setStatus(`generating ${body.num_samples} samples…`);
  try {
    const response = await api.generate(body);
    const before = state;
    state = acceptResponse(state, requestId, response);
    if (state !== before || state.lastResponse === response) {
      gallery = buildGallery(response);
      selectedCard = 0;
      renderGallery();
      setStatus(`done; diversity ${gallery.diversity?.toFixed(3) ?? "n/a"}`);
    }
  } catch (err) {
    state = failGeneration(state, requestId);
    const message = err instanceof ApiError ? `${err.status}: ${err.message}`
      : err instanceof Error ? err.message : "generation failed";
    setStatus(message, true);
  }
  syncControls();
}

function cardCanvas(values: Float32Array, reference: Float32Array | null, roi: Rect,
                    cmap: LayerName, lo: number, hi: number, w: number,
                    h: number): HTMLCanvasElement {
  const canvas = document.createElement("canvas");
  canvas.width = w * 2;
  canvas.height = h * 2;
  const ctx = canvas.getContext("2d")!;
  const pixels = reference
    ? compositeSample(values, reference, w, h, roi, cmap, lo, hi).pixels
    : rasterPixels(values, cmap, lo, hi);
  const off = new OffscreenCanvas(w, h);
  off.getContext("2d")!.putImageData(new ImageData(new Uint8ClampedArray(pixels), w, h), 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, w * 2, h * 2);
  return canvas;
}

function renderGallery(): void {
  const container = $("gallery");
  container.innerHTML = "";
  if (!gallery || !tile || !rasters) return;
  const [h, w] = tile.shape;
  $("gallery-header").textContent =
    `mean Δ_pred ${gallery.meanDeltaPred >= 0 ? "+" : ""}` +
    `${gallery.meanDeltaPred.toFixed(2)} °C · diversity ` +
    `${gallery.diversity?.toFixed(3) ?? "n/a"} · seed ${gallery.seed} · ` +
    `provenance ${String((gallery.provenance as Record<string, unknown>).config_hash ?? "")}`;

  gallery.cards.forEach((card, index) => {
    const composite = compositeSample(card.ndvi, rasters!.ndvi, w, h, gallery!.roi,
                                      "ndvi", -1, 1);
    const el = document.createElement("div");
    el.className = "card" + (index === selectedCard ? " selected" : "");
    if (!composite.conservationOk) el.classList.add("violation");

    const top = cardCanvas(card.ndvi, rasters!.ndvi, gallery!.roi, "ndvi", -1, 1, w, h);
    const [lo, hi] = valueRange(card.lstPred);
    const bottom = cardCanvas(card.lstPred, null, gallery!.roi, "lst_pred", lo, hi, w, h);
    const badge = document.createElement("div");
    badge.className = "badge";
    badge.textContent = card.badge;
    const pin = document.createElement("button");
    pin.textContent = state.pinned.some((p) => p.key === card.pinKey) ? "unpin" : "pin";
    pin.addEventListener("click", (ev) => {
      ev.stopPropagation();
      state = togglePin(state, cardToPin(gallery!, index, tile!.tile_id,
                                         state.deltaTarget, state.gain));
      renderGallery();
    });
    el.addEventListener("click", () => {
      selectedCard = index;
      renderGallery();
      if (state.layer === "lst_pred") drawMainCanvas();
    });
    el.append(top, badge, bottom, pin);
    container.appendChild(el);
  });
  renderPins();
}

function renderPins(): void {
  const strip = $("pin-strip");
  strip.innerHTML = "";
  if (!tile) return;
  const [h, w] = tile.shape;
  for (const pin of state.pinned) {
    const el = document.createElement("div");
    el.className = "card pinned";
    const canvas = cardCanvas(pin.ndvi, null, state.roi, "ndvi", -1, 1, w, h);
    const label = document.createElement("div");
    label.className = "badge";
    label.textContent = `Δt=${pin.deltaTarget} w=${pin.gain} ` +
      `→ ${pin.deltaPred >= 0 ? "+" : ""}${pin.deltaPred.toFixed(2)} °C`;
    el.append(canvas, label);
    strip.appendChild(el);
  }
}

function wireControls(): void {
  ($("delta-slider") as unknown as HTMLInputElement).addEventListener("input", (ev) => {
    state = setDeltaTarget(state, Number((ev.target as HTMLInputElement).value));
    syncControls();
  });
  for (const gain of GAINS) {
    $(`gain-${gain}`).addEventListener("click", () => {
      state = setGain(state, gain);
      syncControls();
    });
  }
  $("gain-custom").addEventListener("change", (ev) => {
    const value = Number((ev.target as HTMLInputElement).value);
    if (value > 0) {
      state = setGain(state, value, true);
      syncControls();
    }
  });
  ($("num-samples") as unknown as HTMLInputElement).addEventListener("change", (ev) => {
    const n = Math.max(1, Math.min(16, Number((ev.target as HTMLInputElement).value)));
    state = { ...state, numSamples: n };
    syncControls();
  });
  ($("seed-input") as unknown as HTMLInputElement).addEventListener("change", (ev) => {
    state = { ...state, seed: Number((ev.target as HTMLInputElement).value) >>> 0 };
  });
  ($("seed-lock") as unknown as HTMLInputElement).addEventListener("change", (ev) => {
    state = { ...state, seedLocked: (ev.target as HTMLInputElement).checked };
  });
  for (const layer of ["ndvi", "lst", "bh", "cond", "lst_pred"] as LayerName[]) {
    $(`layer-${layer}`).addEventListener("click", () => {
      state = { ...state, layer };
      drawMainCanvas();
    });
  }
  $("generate-btn").addEventListener("click", () => void onGenerate());
  $("retry-btn").addEventListener("click", () => void loadTileList());
}

wireControls();
wireRoiDrag();
void loadTileList();
