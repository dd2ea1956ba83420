// Results gallery view-model: one card per sample with its predicted
// temperature change, plus a set-level header. Pure data in, pure data out.

import { checksum, decodeF32 } from "./decode.js";
import type { GenerateResponse, Rect } from "./types.js";
import type { PinnedCard } from "./state.js";

export interface GalleryCard {
  index: number;
  deltaPred: number; // exact value from the API, no rounding applied
  badge: string;
  ndvi: Float32Array;
  lstPred: Float32Array;
  pinKey: string;
}

export interface GalleryModel {
  cards: GalleryCard[];
  meanDeltaPred: number;
  diversity: number | null;
  roi: Rect;
  seed: number;
  provenance: Record<string, unknown>;
}

export function badgeText(deltaPred: number): string {
  const sign = deltaPred >= 0 ? "+" : "−";
  return `${sign}${Math.abs(deltaPred).toFixed(2)} °C`;
}

export function buildGallery(response: GenerateResponse): GalleryModel {
  const { request } = response;
  const cards = response.samples.map((sample, index) => ({
    index,
    deltaPred: sample.delta_pred,
    badge: badgeText(sample.delta_pred),
    ndvi: decodeF32(sample.ndvi),
    lstPred: decodeF32(sample.lst_pred),
    pinKey: `${request.tile_id}|${request.delta_target}|${request.gain}|` +
      `${request.seed}|${index}`,
  }));
  const mean = cards.reduce((acc, c) => acc + c.deltaPred, 0) / Math.max(1, cards.length);
  return {
    cards,
    meanDeltaPred: mean,
    diversity: response.metrics.diversity,
    roi: { ...request.roi },
    seed: request.seed,
    provenance: response.provenance,
  };
}

/** Stable content hash: same-seed regeneration must render identically. */
export function galleryHash(model: GalleryModel): string {
  const parts = model.cards.map(
    (c) => `${c.badge}:${checksum(c.ndvi)}:${checksum(c.lstPred)}`);
  return `${model.seed}|${model.diversity}|${parts.join("|")}`;
}

export function cardToPin(model: GalleryModel, index: number, tileId: string,
                          deltaTarget: number, gain: number): PinnedCard {
  const card = model.cards[index];
  return {
    key: card.pinKey,
    tileId,
    deltaTarget,
    gain,
    seed: model.seed,
    sampleIndex: index,
    deltaPred: card.deltaPred,
    ndvi: card.ndvi,
    lstPred: card.lstPred,
  };
}
