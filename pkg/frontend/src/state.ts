// Session state and its transitions. Pure functions over a plain object so
// the request/response lifecycle (including stale-response rejection) is
// testable without a DOM.

import { centeredRoi } from "./roi.js";
import type { GenerateRequest, GenerateResponse, Rect } from "./types.js";

export const GAINS = [1, 2, 3, 5, 8] as const;
export const DELTA_MIN = -3;
export const DELTA_MAX = 3;
export const DELTA_STEP = 0.5;
export const DEFAULT_GAIN = 3; // the best-performing gain in the method's sweeps
export const DEFAULT_SAMPLES = 4;
export const DEFAULT_STEPS = 40;

export type LayerName = "ndvi" | "lst" | "bh" | "cond" | "lst_pred";

export interface PinnedCard {
  key: string;
  tileId: string;
  deltaTarget: number;
  gain: number;
  seed: number;
  sampleIndex: number;
  deltaPred: number;
  ndvi: Float32Array;
  lstPred: Float32Array;
}

export interface SessionState {
  tileId: string | null;
  tileShape: [number, number] | null;
  roi: Rect;
  deltaTarget: number;
  gain: number;
  customGainEnabled: boolean;
  numSamples: number;
  seed: number;
  seedLocked: boolean;
  layer: LayerName;
  lastResponse: GenerateResponse | null;
  pinned: PinnedCard[];
  requestCounter: number;
  inFlightId: number | null;
}

export function randomSeed(): number {
  return Math.floor(Math.random() * 2 ** 31);
}

export function initialState(seed: number = randomSeed()): SessionState {
  return {
    tileId: null,
    tileShape: null,
    roi: { x: 0, y: 0, w: 32, h: 32 },
    deltaTarget: 0,
    gain: DEFAULT_GAIN,
    customGainEnabled: false,
    numSamples: DEFAULT_SAMPLES,
    seed,
    seedLocked: false,
    layer: "ndvi",
    lastResponse: null,
    pinned: [],
    requestCounter: 0,
    inFlightId: null,
  };
}

export function selectTile(state: SessionState, tileId: string,
                           shape: [number, number]): SessionState {
  const [h, w] = shape;
  return { ...state, tileId, tileShape: shape, roi: centeredRoi(w, h), lastResponse: null };
}

/** Snap the slider value to the 0.5 °C grid inside [-3, +3]. */
export function setDeltaTarget(state: SessionState, value: number): SessionState {
  const snapped = Math.round(value / DELTA_STEP) * DELTA_STEP;
  const clamped = Math.min(DELTA_MAX, Math.max(DELTA_MIN, snapped));
  return { ...state, deltaTarget: clamped };
}

export function setGain(state: SessionState, gain: number, custom = false): SessionState {
  if (!custom && !(GAINS as readonly number[]).includes(gain)) {
    throw new Error(`gain ${gain} is not in the allowed set; enable custom gain`);
  }
  if (gain <= 0) throw new Error("gain must be positive");
  return { ...state, gain, customGainEnabled: custom };
}

export function buildGenerateRequest(state: SessionState,
                                     steps: number = DEFAULT_STEPS): GenerateRequest {
  if (state.tileId === null) throw new Error("no tile selected");
  return {
    tile_id: state.tileId,
    roi: { ...state.roi },
    delta_target: state.deltaTarget,
    gain: state.gain,
    num_samples: state.numSamples,
    seed: state.seed,
    steps,
  };
}

/** One generation in flight at a time; returns the request id to tag it. */
export function beginGeneration(state: SessionState): [SessionState, number] {
  const id = state.requestCounter + 1;
  return [{ ...state, requestCounter: id, inFlightId: id }, id];
}

/** Stale responses (superseded request ids) are discarded unchanged. */
export function acceptResponse(state: SessionState, requestId: number,
                               response: GenerateResponse): SessionState {
  if (state.inFlightId !== requestId) return state;
  const next: SessionState = { ...state, lastResponse: response, inFlightId: null };
  if (!state.seedLocked) next.seed = randomSeed();
  return next;
}

export function failGeneration(state: SessionState, requestId: number): SessionState {
  if (state.inFlightId !== requestId) return state;
  return { ...state, inFlightId: null };
}

export function togglePin(state: SessionState, card: PinnedCard): SessionState {
  const existing = state.pinned.findIndex((p) => p.key === card.key);
  const pinned = existing >= 0
    ? state.pinned.filter((p) => p.key !== card.key)
    : [...state.pinned, card];
  return { ...state, pinned };
}
