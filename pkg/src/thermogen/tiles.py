"""Tile data model, on-disk format, synthetic data generation and raster ingestion.

A tile is a co-registered (ndvi, lst, bh) raster triple plus provenance
metadata. On disk a tile is a raw little-endian float32 blob (channels
concatenated in ``CHANNEL_ORDER``) next to a JSON sidecar; a manifest is a
single JSON file listing tiles relative to its own directory.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field, asdict
from datetime import date, timedelta
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage

CHANNEL_ORDER = ("ndvi", "lst", "bh")
SIDECAR_VERSION = 1


class TileError(ValueError):
    """Raised for invalid tile data or unreadable tile files."""


@dataclass(frozen=True)
class Roi:
    """Pixel-aligned rectangle: x/y is the top-left corner (column/row)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError(f"roi must have positive extent, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"roi origin must be non-negative, got ({self.x}, {self.y})")

    def validate_within(self, shape: tuple[int, int]) -> "Roi":
        height, width = shape
        if self.y + self.h > height or self.x + self.w > width:
            raise ValueError(
                f"roi {self.x},{self.y},{self.w},{self.h} exceeds raster {height}x{width}")
        return self

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)

    @classmethod
    def centered(cls, shape: tuple[int, int], size: int = 32) -> "Roi":
        height, width = shape
        return cls((width - size) // 2, (height - size) // 2, size, size)


@dataclass(frozen=True)
class NormalizationSpec:
    """Affine normalization into model space; ndvi passes through unchanged."""

    lst_center: float = 20.0  # °C
    lst_scale: float = 10.0   # °C
    bh_scale: float = 60.0    # meters

    def __post_init__(self) -> None:
        if self.lst_scale <= 0:
            raise ValueError(f"lst_scale must be > 0, got {self.lst_scale}")
        if self.bh_scale <= 0:
            raise ValueError(f"bh_scale must be > 0, got {self.bh_scale}")

    def spec_id(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _check_raster(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 2:
        raise TileError(f"{name} must be a 2-D raster, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise TileError(f"{name} contains non-finite values")
    return arr


@dataclass
class Tile:
    """One co-registered raster patch: vegetation index, temperature, building height."""

    ndvi: np.ndarray  # unitless in [-1, 1]
    lst: np.ndarray   # °C
    bh: np.ndarray    # meters, >= 0
    city_id: str
    acquisition_date: str  # ISO-8601
    tile_id: str
    pixel_size_m: float = 30.0

    def __post_init__(self) -> None:
        self.ndvi = _check_raster("ndvi", self.ndvi)
        self.lst = _check_raster("lst", self.lst)
        self.bh = _check_raster("bh", self.bh)
        if not (self.ndvi.shape == self.lst.shape == self.bh.shape):
            raise TileError(
                "channel shape mismatch: "
                f"ndvi {self.ndvi.shape}, lst {self.lst.shape}, bh {self.bh.shape}"
            )
        if self.ndvi.min() < -1.0 or self.ndvi.max() > 1.0:
            raise TileError("ndvi out of range [-1, 1]")
        if self.bh.min() < 0.0:
            raise TileError("bh contains negative heights")
        date.fromisoformat(self.acquisition_date)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ndvi.shape

    def t_base(self) -> float:
        """Mean LST of the tile in °C (the per-tile baseline temperature)."""
        return float(np.mean(self.lst, dtype=np.float64))

    def channels(self) -> dict[str, np.ndarray]:
        return {"ndvi": self.ndvi, "lst": self.lst, "bh": self.bh}


@dataclass(frozen=True)
class ManifestEntry:
    tile_id: str
    city_id: str
    acquisition_date: str
    path: str  # relative to the manifest directory


@dataclass
class TileManifest:
    """Index of tiles on disk plus the normalization used for model space."""

    root: Path
    entries: list[ManifestEntry]
    normalization: NormalizationSpec = field(default_factory=NormalizationSpec)

    def __post_init__(self) -> None:
        self.root = Path(self.root)
        ids = [e.tile_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise TileError(f"duplicate tile_id in manifest: {dupes}")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def tile_ids(self) -> list[str]:
        return [e.tile_id for e in self.entries]

    def entry(self, tile_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.tile_id == tile_id:
                return e
        raise KeyError(f"unknown tile_id {tile_id!r}")

    def load(self, tile_id: str) -> Tile:
        return load_tile(self.root / self.entry(tile_id).path)

    def load_all(self) -> list[Tile]:
        return [load_tile(self.root / e.path) for e in self.entries]

    def save(self, path: Path | str) -> Path:
        path = Path(path)
        doc = {
            "channel_order": list(CHANNEL_ORDER),
            "normalization": asdict(self.normalization),
            "entries": [asdict(e) for e in self.entries],
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True))
        return path

    @classmethod
    def from_file(cls, path: Path | str) -> "TileManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        if tuple(doc["channel_order"]) != CHANNEL_ORDER:
            raise TileError(
                f"manifest channel_order must be {list(CHANNEL_ORDER)}, "
                f"got {doc['channel_order']}"
            )
        entries = [ManifestEntry(**e) for e in doc["entries"]]
        manifest = cls(
            root=path.parent,
            entries=entries,
            normalization=NormalizationSpec(**doc["normalization"]),
        )
        for e in entries:
            if not (manifest.root / e.path).exists():
                raise TileError(f"manifest entry {e.tile_id}: missing file {e.path}")
        return manifest


# ---------------------------------------------------------------------------
# On-disk tile format
# ---------------------------------------------------------------------------

def save_tile(tile: Tile, root: Path | str) -> Path:
    """Write ``<tile_id>.bin`` (raw <f4 blob, channels concatenated) plus a JSON sidecar."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    blob_path = root / f"{tile.tile_id}.bin"
    h, w = tile.shape
    with open(blob_path, "wb") as f:
        for name in CHANNEL_ORDER:
            f.write(np.ascontiguousarray(tile.channels()[name], dtype="<f4").tobytes())
    sidecar = {
        "tile_id": tile.tile_id,
        "city_id": tile.city_id,
        "acquisition_date": tile.acquisition_date,
        "pixel_size_m": tile.pixel_size_m,
        "shape": [h, w],
        "channel_order": list(CHANNEL_ORDER),
        "dtype": "<f4",
    }
    blob_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return blob_path


def load_tile(path: Path | str) -> Tile:
    """Read a tile blob + sidecar; rejects truncated files and invariant violations."""
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not path.exists():
        raise TileError(f"missing tile blob {path}")
    if not sidecar_path.exists():
        raise TileError(f"missing tile sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    if tuple(meta["channel_order"]) != CHANNEL_ORDER:
        raise TileError(f"unsupported channel_order {meta['channel_order']} in {sidecar_path}")
    h, w = (int(v) for v in meta["shape"])
    per_channel = h * w * 4
    raw = path.read_bytes()
    expected = per_channel * len(CHANNEL_ORDER)
    if len(raw) != expected:
        cut = min(len(raw) // per_channel, len(CHANNEL_ORDER) - 1)
        raise TileError(
            f"truncated tile blob {path}: channel '{CHANNEL_ORDER[cut]}' incomplete, "
            f"expected {expected} bytes, got {len(raw)}"
        )
    rasters = {}
    for i, name in enumerate(CHANNEL_ORDER):
        rasters[name] = np.frombuffer(
            raw, dtype="<f4", count=h * w, offset=i * per_channel
        ).reshape(h, w).copy()
    return Tile(
        ndvi=rasters["ndvi"],
        lst=rasters["lst"],
        bh=rasters["bh"],
        city_id=meta["city_id"],
        acquisition_date=meta["acquisition_date"],
        tile_id=meta["tile_id"],
        pixel_size_m=float(meta.get("pixel_size_m", 30.0)),
    )


# ---------------------------------------------------------------------------
# Synthetic procedural urban data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticWorldConfig:
    """Parameters of the procedural generator coupling vegetation, buildings, temperature."""

    t0: float = 24.0              # baseline °C
    alpha: float = 6.0            # °C per normalized building-height unit
    beta: float = 5.0             # °C per ndvi unit
    blur_radius_px: int = 2
    noise_std: float = 0.25       # °C
    bh_block_density: float = 0.25
    seed: int = 0
    size: int = 128

    def __post_init__(self) -> None:
        if self.blur_radius_px < 0:
            raise ValueError("blur_radius_px must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if not 0.0 <= self.bh_block_density <= 1.0:
            raise ValueError("bh_block_density must be in [0, 1]")
        if self.size < 8:
            raise ValueError("size must be >= 8")


_CITIES = ("aurora", "brookfield", "cedar_park", "dunmore")


def box_blur(field: np.ndarray, radius: int) -> np.ndarray:
    """Normalized box blur with reflective borders; radius 0 is the identity."""
    if radius == 0:
        return np.asarray(field, dtype=np.float64)
    return ndimage.uniform_filter(
        np.asarray(field, dtype=np.float64), size=2 * radius + 1, mode="reflect"
    )


def synthetic_lst(ndvi: np.ndarray, bh: np.ndarray, config: SyntheticWorldConfig,
                  noise: np.ndarray | None = None) -> np.ndarray:
    """Closed-form temperature of the synthetic world, in float32.

    lst = t0 + alpha * (bh / 60) - beta * blur(ndvi) + noise
    """
    ndvi64 = np.asarray(ndvi, dtype=np.float32).astype(np.float64)
    bh64 = np.asarray(bh, dtype=np.float32).astype(np.float64)
    lst = (
        config.t0
        + config.alpha * (bh64 / 60.0)
        - config.beta * box_blur(ndvi64, config.blur_radius_px)
    )
    if noise is not None:
        lst = lst + noise
    return lst.astype(np.float32)


def generate_synthetic_tile(config: SyntheticWorldConfig, tile_seed: int) -> Tile:
    """Generate one deterministic synthetic tile from (config.seed, tile_seed)."""
    rng = np.random.default_rng((config.seed, int(tile_seed)))
    n = config.size

    # Buildings: union of random axis-aligned blocks, heights in [3, 60] m,
    # grown until the covered fraction reaches the configured density.
    bh = np.zeros((n, n), dtype=np.float64)
    target = config.bh_block_density * n * n
    attempts = 0
    while (bh > 0).sum() < target and attempts < 4000:
        rw = int(rng.integers(2, max(3, n // 6)))
        rh = int(rng.integers(2, max(3, n // 6)))
        r0 = int(rng.integers(0, n - rh + 1))
        c0 = int(rng.integers(0, n - rw + 1))
        height = float(rng.uniform(3.0, 60.0))
        bh[r0:r0 + rh, c0:c0 + rw] = np.maximum(bh[r0:r0 + rh, c0:c0 + rw], height)
        attempts += 1
    bh32 = bh.astype(np.float32)

    # Vegetation: two-scale smoothed Gaussian field, clipped, suppressed under buildings.
    coarse = ndimage.gaussian_filter(rng.normal(size=(n, n)), sigma=n / 8.0, mode="wrap")
    fine = ndimage.gaussian_filter(rng.normal(size=(n, n)), sigma=2.0, mode="wrap")
    coarse_std = coarse.std()
    fine_std = fine.std()
    ndvi = 0.30 + 0.35 * (coarse / coarse_std if coarse_std > 0 else coarse)
    ndvi += 0.12 * (fine / fine_std if fine_std > 0 else fine)
    ndvi = np.clip(ndvi, -1.0, 1.0)
    ndvi = np.where(bh > 0, 0.2 * ndvi, ndvi)
    ndvi32 = ndvi.astype(np.float32)

    noise = None
    if config.noise_std > 0:
        noise = config.noise_std * rng.normal(size=(n, n))
    lst32 = synthetic_lst(ndvi32, bh32, config, noise)

    base = date(2019, 1, 1) + timedelta(days=int(tile_seed) % 720)
    return Tile(
        ndvi=ndvi32,
        lst=lst32,
        bh=bh32,
        city_id=_CITIES[int(tile_seed) % len(_CITIES)],
        acquisition_date=base.isoformat(),
        tile_id=f"syn{int(tile_seed):05d}",
        pixel_size_m=30.0,
    )


def build_synthetic_manifest(config: SyntheticWorldConfig, n_tiles: int,
                             root: Path | str) -> TileManifest:
    """Generate n_tiles synthetic tiles under root/tiles and write root/manifest.json."""
    root = Path(root)
    tile_dir = root / "tiles"
    entries = []
    lst_values = []
    for k in range(n_tiles):
        tile = generate_synthetic_tile(config, k)
        save_tile(tile, tile_dir)
        entries.append(ManifestEntry(
            tile_id=tile.tile_id,
            city_id=tile.city_id,
            acquisition_date=tile.acquisition_date,
            path=f"tiles/{tile.tile_id}.bin",
        ))
        lst_values.append(tile.lst)
    norm = fit_normalization(lst_values) if lst_values else NormalizationSpec()
    manifest = TileManifest(root=root, entries=entries, normalization=norm)
    manifest.save(root / "manifest.json")
    return manifest


def fit_normalization(lst_rasters: Sequence[np.ndarray], bh_scale: float = 60.0) -> NormalizationSpec:
    """Dataset-level affine spec: center/scale from the pooled LST distribution."""
    stacked = np.concatenate([np.asarray(r, dtype=np.float64).ravel() for r in lst_rasters])
    scale = float(stacked.std())
    return NormalizationSpec(
        lst_center=float(stacked.mean()),
        lst_scale=scale if scale > 1e-6 else 1.0,
        bh_scale=bh_scale,
    )


# ---------------------------------------------------------------------------
# Splits and normalization
# ---------------------------------------------------------------------------

def make_splits(manifest: TileManifest, date_cutoff: str | date) -> tuple[TileManifest, TileManifest]:
    """Temporal split: acquisition_date < cutoff goes to train, the rest to test."""
    if len(manifest) == 0:
        raise TileError("cannot split an empty manifest")
    cutoff = date.fromisoformat(date_cutoff) if isinstance(date_cutoff, str) else date_cutoff
    train = [e for e in manifest if date.fromisoformat(e.acquisition_date) < cutoff]
    test = [e for e in manifest if date.fromisoformat(e.acquisition_date) >= cutoff]
    if not train:
        raise TileError(f"empty train split for cutoff {cutoff.isoformat()}")
    if not test:
        raise TileError(f"empty test split for cutoff {cutoff.isoformat()}")
    return (
        TileManifest(manifest.root, train, manifest.normalization),
        TileManifest(manifest.root, test, manifest.normalization),
    )


def normalize(tile: Tile, spec: NormalizationSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map a tile into model space: (ndvi, (lst-center)/scale, bh/bh_scale)."""
    ndvi = tile.ndvi.astype(np.float32)
    lst = ((tile.lst.astype(np.float64) - spec.lst_center) / spec.lst_scale).astype(np.float32)
    bh = (tile.bh.astype(np.float64) / spec.bh_scale).astype(np.float32)
    return ndvi, lst, bh


def denormalize(triple: tuple[np.ndarray, np.ndarray, np.ndarray],
                spec: NormalizationSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`normalize`, identity to within 1e-6 relative."""
    ndvi, lst_n, bh_n = triple
    lst = (np.asarray(lst_n, dtype=np.float64) * spec.lst_scale + spec.lst_center).astype(np.float32)
    bh = (np.asarray(bh_n, dtype=np.float64) * spec.bh_scale).astype(np.float32)
    return np.asarray(ndvi, dtype=np.float32), lst, bh


# ---------------------------------------------------------------------------
# Ingestion of exported rasters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TilingGrid:
    """Non-overlapping tiling parameters for raster ingestion."""

    tile_px: int = 128
    max_invalid_fraction: float = 0.05

    def __post_init__(self) -> None:
        if self.tile_px < 8:
            raise ValueError("tile_px must be >= 8")
        if not 0.0 <= self.max_invalid_fraction <= 1.0:
            raise ValueError("max_invalid_fraction must be in [0, 1]")


def _read_band(directory: Path, name: str) -> tuple[np.ndarray, dict]:
    arr_path = directory / f"{name}.npy"
    sidecar_path = directory / f"{name}.json"
    if not arr_path.exists():
        raise TileError(f"missing raster {arr_path}")
    if not sidecar_path.exists():
        raise TileError(f"missing sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    version = int(meta.get("version", SIDECAR_VERSION))
    if version != SIDECAR_VERSION:
        raise TileError(f"unknown sidecar version {version} in {sidecar_path}")
    for key in ("geotransform", "nodata", "crs"):
        if key not in meta:
            raise TileError(f"sidecar {sidecar_path} missing key {key!r}")
    arr = np.load(arr_path).astype(np.float64)
    if arr.ndim != 2:
        raise TileError(f"raster {name} must be single-band 2-D, got shape {arr.shape}")
    return arr, meta


def _fill_nearest(arr: np.ndarray, invalid: np.ndarray) -> np.ndarray:
    if not invalid.any():
        return arr
    idx = ndimage.distance_transform_edt(invalid, return_distances=False, return_indices=True)
    return arr[tuple(idx)]


def ingest_raster_export(src_dir: Path | str, out_root: Path | str,
                         grid: TilingGrid = TilingGrid()) -> TileManifest:
    """Crop co-registered {ndvi,lst,bh}.npy exports into tiles and build a manifest.

    Tiles with more than ``grid.max_invalid_fraction`` invalid pixels (nodata or
    non-finite, in any band) are discarded; surviving invalid pixels are filled
    from the nearest valid neighbor.
    """
    src_dir = Path(src_dir)
    out_root = Path(out_root)
    bands, metas = {}, {}
    for name in CHANNEL_ORDER:
        bands[name], metas[name] = _read_band(src_dir, name)

    ref_meta = metas["ndvi"]
    ref_gt = [float(v) for v in ref_meta["geotransform"]]
    for name in CHANNEL_ORDER:
        if [float(v) for v in metas[name]["geotransform"]] != ref_gt:
            raise TileError(f"misaligned rasters: {name} geotransform differs from ndvi")
        if bands[name].shape != bands["ndvi"].shape:
            raise TileError(f"misaligned rasters: {name} shape {bands[name].shape} "
                            f"differs from ndvi {bands['ndvi'].shape}")

    height, width = bands["ndvi"].shape
    t = grid.tile_px
    rows, cols = height // t, width // t
    if rows == 0 or cols == 0:
        raise TileError(f"raster {height}x{width} smaller than tile size {t}")

    invalid_all = np.zeros((height, width), dtype=bool)
    for name in CHANNEL_ORDER:
        nodata = float(metas[name]["nodata"])
        invalid_all |= ~np.isfinite(bands[name]) | (bands[name] == nodata)

    city_id = str(ref_meta.get("city_id", src_dir.name))
    acq_date = str(ref_meta.get("acquisition_date", "1970-01-01"))
    pixel_size = abs(ref_gt[1]) if ref_gt[1] else 30.0

    tile_dir = out_root / "tiles"
    entries = []
    lst_values = []
    for r in range(rows):
        for c in range(cols):
            sl = np.s_[r * t:(r + 1) * t, c * t:(c + 1) * t]
            invalid = invalid_all[sl]
            if invalid.mean() > grid.max_invalid_fraction:
                continue
            filled = {
                name: _fill_nearest(bands[name][sl], invalid).astype(np.float32)
                for name in CHANNEL_ORDER
            }
            tile = Tile(
                ndvi=np.clip(filled["ndvi"], -1.0, 1.0),
                lst=filled["lst"],
                bh=np.maximum(filled["bh"], 0.0),
                city_id=city_id,
                acquisition_date=acq_date,
                tile_id=f"{city_id}_{acq_date}_r{r:03d}c{c:03d}",
                pixel_size_m=pixel_size,
            )
            save_tile(tile, tile_dir)
            entries.append(ManifestEntry(
                tile_id=tile.tile_id,
                city_id=city_id,
                acquisition_date=acq_date,
                path=f"tiles/{tile.tile_id}.bin",
            ))
            lst_values.append(tile.lst)

    norm = fit_normalization(lst_values) if lst_values else NormalizationSpec()
    manifest = TileManifest(root=out_root, entries=entries, normalization=norm)
    manifest.save(out_root / "manifest.json")
    return manifest
