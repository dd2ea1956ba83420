// Wire types mirroring the HTTP JSON API.

export type RasterPayload = { b64: string; dtype: string; shape: number[] };

export type TileSummary = { tile_id: string; city_id: string; acquisition_date: string };

export type TileListing = { count: number; tiles: TileSummary[]; normalization_id: string };

export type TileDetail = {
  tile_id: string;
  city_id: string;
  acquisition_date: string;
  pixel_size_m: number;
  shape: number[];
  channels: { ndvi: RasterPayload; lst: RasterPayload; bh: RasterPayload };
  previews: { ndvi: string; lst: string; bh: string };
};

export type Rect = { x: number; y: number; w: number; h: number };

export type GenerateRequest = {
  tile_id: string;
  roi: Rect;
  delta_target: number;
  gain: number;
  num_samples: number;
  seed: number;
  steps: number;
};

export type SampleOut = {
  ndvi: RasterPayload;
  lst_pred: RasterPayload;
  delta_pred: number;
  preview_png_b64: string;
};

export type GenerateResponse = {
  samples: SampleOut[];
  metrics: { ctrl_err: number; ctrl_err_std: number; diversity: number | null };
  provenance: Record<string, unknown>;
  request: GenerateRequest;
};
