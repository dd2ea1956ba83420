"""HTTP JSON service exposing tiles and generation to the UI and scripts.

Rasters travel as base64 little-endian float32 with explicit shape fields;
PNG previews are display-only. Model weights are immutable after startup and
per-request RNG derives from the request seed, so identical requests return
identical payloads.
"""

from __future__ import annotations

import base64
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .config import RunConfig
from .forward import ForwardModel
from .plots import colormapped_png_bytes
from .sampler import EditRequest, KarrasSchedule, generate
from .tiles import Roi, Tile, TileManifest
from .training import InverseModel

MAX_SAMPLES = 16
MAX_STEPS = 100

_PREVIEW_STYLE = {
    "ndvi": dict(cmap="RdYlGn", vmin=-1.0, vmax=1.0),
    "lst": dict(cmap="inferno"),
    "bh": dict(cmap="cividis"),
}


class RoiBody(BaseModel):
    x: int = Field(ge=0)
    y: int = Field(ge=0)
    w: int = Field(ge=1)
    h: int = Field(ge=1)


class GenerateBody(BaseModel):
    tile_id: str
    roi: RoiBody
    delta_target: float
    gain: float = 3.0
    num_samples: int = Field(default=4, ge=1, le=MAX_SAMPLES)
    seed: int = 0
    steps: int = Field(default=40, ge=2, le=MAX_STEPS)


class ModelStore:
    """Read-only state shared across requests."""

    def __init__(self, manifest: TileManifest, forward: ForwardModel,
                 inverse: InverseModel, provenance: dict):
        self.manifest = manifest
        self.forward = forward
        self.inverse = inverse
        self.provenance = provenance


def load_store(data_root: Path | str, ckpt_dir: Path | str,
               config: RunConfig | None = None) -> ModelStore:
    data_root = Path(data_root)
    ckpt_dir = Path(ckpt_dir)
    manifest = TileManifest.from_file(data_root / "manifest.json")
    forward = ForwardModel.load(ckpt_dir / "forward.pt")
    inverse_paths = sorted(ckpt_dir.glob("inverse*.pt"))
    if not inverse_paths:
        raise FileNotFoundError(f"no inverse*.pt checkpoints in {ckpt_dir}")
    inverse = InverseModel.load(inverse_paths[0])
    provenance = {
        "forward_ckpt": "forward.pt",
        "inverse_ckpt": inverse_paths[0].name,
        "config_hash": (config or RunConfig()).config_hash(),
    }
    return ModelStore(manifest, forward, inverse, provenance)


def _b64_f32(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return {
        "b64": base64.b64encode(arr.tobytes()).decode("ascii"),
        "dtype": "<f4",
        "shape": list(arr.shape),
    }


def _preview(name: str, raster: np.ndarray) -> str:
    return base64.b64encode(
        colormapped_png_bytes(raster, **_PREVIEW_STYLE[name])).decode("ascii")


def _tile_payload(tile: Tile) -> dict:
    return {
        "tile_id": tile.tile_id,
        "city_id": tile.city_id,
        "acquisition_date": tile.acquisition_date,
        "pixel_size_m": tile.pixel_size_m,
        "shape": list(tile.shape),
        "channels": {name: _b64_f32(raster) for name, raster in tile.channels().items()},
        "previews": {name: _preview(name, raster)
                     for name, raster in tile.channels().items()},
    }


def create_app(data_root: Path | str | None = None, ckpt_dir: Path | str | None = None,
               config: RunConfig | None = None, store: ModelStore | None = None,
               eager: bool = True, ui_dir: Path | str | None = None) -> FastAPI:
    """HTTP app over a model store; with ``eager`` the checkpoints load now.

    When ``ui_dir`` points at a built frontend (index.html + dist/), it is
    served at the root path.
    """
    app = FastAPI(title="thermogen", version="0.1.0")
    app.state.store = store
    if store is None and eager and data_root is not None:
        app.state.store = load_store(data_root, ckpt_dir, config)

    def ready_store() -> ModelStore:
        if app.state.store is None:
            raise HTTPException(status_code=503, detail="checkpoints are still loading")
        return app.state.store

    @app.get("/api/health")
    def health():
        return {"status": "ok", "ready": app.state.store is not None}

    @app.get("/api/tiles")
    def tiles():
        st = ready_store()
        return {
            "count": len(st.manifest),
            "tiles": [
                {"tile_id": e.tile_id, "city_id": e.city_id,
                 "acquisition_date": e.acquisition_date}
                for e in st.manifest
            ],
            "normalization_id": st.manifest.normalization.spec_id(),
        }

    @app.get("/api/tiles/{tile_id}")
    def tile_detail(tile_id: str):
        st = ready_store()
        try:
            tile = st.manifest.load(tile_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown tile {tile_id!r}")
        return _tile_payload(tile)

    @app.post("/api/generate")
    def generate_endpoint(body: GenerateBody):
        st = ready_store()
        try:
            tile = st.manifest.load(body.tile_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown tile {body.tile_id!r}")
        try:
            roi = Roi(body.roi.x, body.roi.y, body.roi.w, body.roi.h)
            roi.validate_within(tile.shape)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=[{
                "loc": ["body", "roi"], "msg": str(exc), "type": "value_error"}])
        request = EditRequest(
            tile_id=body.tile_id, roi=roi, delta_target=body.delta_target,
            gain=body.gain, num_samples=body.num_samples, seed=body.seed)
        schedule = KarrasSchedule(steps=body.steps)
        result = generate(tile, request, st.inverse, st.forward, schedule=schedule,
                          provenance=st.provenance)
        return {
            "samples": [
                {
                    "ndvi": _b64_f32(result.samples[j]),
                    "lst_pred": _b64_f32(result.lst_pred[j]),
                    "delta_pred": float(result.delta_pred[j]),
                    "preview_png_b64": base64.b64encode(colormapped_png_bytes(
                        result.samples[j], cmap="RdYlGn", vmin=-1, vmax=1)).decode("ascii"),
                }
                for j in range(len(result.samples))
            ],
            "metrics": {
                "ctrl_err": result.metrics.ctrl_err,
                "ctrl_err_std": result.metrics.ctrl_err_std,
                "diversity": result.metrics.diversity,
            },
            "provenance": result.provenance,
            "request": body.model_dump(),
        }

    if ui_dir is not None and (Path(ui_dir) / "index.html").exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=Path(ui_dir), html=True), name="ui")

    return app
