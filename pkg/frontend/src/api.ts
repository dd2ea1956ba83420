// Thin typed client over the generation service.

import type { GenerateRequest, GenerateResponse, TileDetail, TileListing } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
      // keep statusText
    }
    throw new ApiError(res.status, detail);
  }
  return res.json() as Promise<T>;
}

export class ApiClient {
  constructor(private base: string = "") {}

  health(): Promise<{ status: string; ready: boolean }> {
    return fetch(`${this.base}/api/health`).then((r) => asJson(r));
  }

  tiles(): Promise<TileListing> {
    return fetch(`${this.base}/api/tiles`).then((r) => asJson(r));
  }

  tile(tileId: string): Promise<TileDetail> {
    return fetch(`${this.base}/api/tiles/${encodeURIComponent(tileId)}`)
      .then((r) => asJson(r));
  }

  generate(body: GenerateRequest, signal?: AbortSignal): Promise<GenerateResponse> {
    return fetch(`${this.base}/api/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    }).then((r) => asJson(r));
  }
}
