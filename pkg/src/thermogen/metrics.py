"""Quantitative evaluation: the four generation metrics, windowed SSIM,
radially averaged power spectra and the dataset ambiguity analysis.

Temperature metrics are computed in physical °C so they are invariant under
the normalization spec.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy import signal

from .tiles import Roi, Tile, TileManifest

if TYPE_CHECKING:
    from .forward import ForwardModel


def mean_roi(raster: np.ndarray, roi: Roi) -> float:
    """Mean of the raster restricted to the region of interest."""
    roi.validate_within(raster.shape)
    return float(np.mean(raster[roi.slices()], dtype=np.float64))


# ---------------------------------------------------------------------------
# Structural similarity and diversity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SsimConfig:
    window: int = 7
    sigma: float = 1.5
    data_range: float = 2.0  # NDVI span
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self) -> None:
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be odd and positive")
        if self.data_range <= 0:
            raise ValueError("data_range must be > 0")


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian window of the given odd size."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(offsets ** 2) / (2 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a: np.ndarray, b: np.ndarray, config: SsimConfig = SsimConfig()) -> float:
    """Mean structural similarity over valid Gaussian windows, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < config.window:
        raise ValueError(f"raster {a.shape} smaller than {config.window}x{config.window} window")
    kernel = gaussian_window(config.window, config.sigma)
    filt = lambda x: signal.correlate2d(x, kernel, mode="valid")

    mu_a = filt(a)
    mu_b = filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    c1 = (config.k1 * config.data_range) ** 2
    c2 = (config.k2 * config.data_range) ** 2
    ssim_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(ssim_map.mean())


def diversity(samples: Sequence[np.ndarray], roi: Roi,
              config: SsimConfig = SsimConfig()) -> float:
    """Mean of 1 - SSIM over all unordered sample pairs, on ROI crops."""
    if len(samples) < 2:
        raise ValueError(f"diversity needs at least 2 samples, got {len(samples)}")
    crops = [np.asarray(s)[roi.validate_within(s.shape).slices()] for s in samples]
    values = []
    for i in range(len(crops)):
        for j in range(i + 1, len(crops)):
            values.append(1.0 - ssim(crops[i], crops[j], config))
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# Temperature metrics
# ---------------------------------------------------------------------------

def ctrl_err(delta_pred: float, delta_target: float) -> float:
    """Temperature control error |delta_pred - delta_target|, °C."""
    return abs(float(delta_pred) - float(delta_target))


def base_err(samples_at_zero: Sequence[np.ndarray], forward: "ForwardModel",
             tile: Tile, roi: Roi) -> float:
    """Mean over zero-change samples of |ROI-mean predicted - ROI-mean observed|, °C."""
    t_gt_roi = mean_roi(tile.lst, roi)
    baseline = tile.t_base()
    errors = [
        abs(mean_roi(forward.predict(np.asarray(s, np.float32), tile.bh, baseline), roi)
            - t_gt_roi)
        for s in samples_at_zero
    ]
    return float(np.mean(errors))


def surr_cal_err(forward: "ForwardModel", tile: Tile, roi: Roi) -> float:
    """Forward-model calibration floor on the observed vegetation, °C."""
    pred = forward.predict(tile.ndvi, tile.bh, tile.t_base())
    return abs(mean_roi(pred, roi) - mean_roi(tile.lst, roi))


@dataclass
class MetricBundle:
    """Aggregated metrics for one generated sample set."""

    ctrl_err: float
    ctrl_err_std: float
    diversity: float | None  # defined only for 2+ samples
    sample_count: int
    delta_pred: list[float]
    base_err: float | None = None
    surr_cal_err: float | None = None

    def as_dict(self) -> dict:
        return {
            "ctrl_err": self.ctrl_err,
            "ctrl_err_std": self.ctrl_err_std,
            "diversity": self.diversity,
            "sample_count": self.sample_count,
            "delta_pred": self.delta_pred,
            "base_err": self.base_err,
            "surr_cal_err": self.surr_cal_err,
        }


def bundle_metrics(delta_pred: Sequence[float], delta_target: float,
                   samples: Sequence[np.ndarray] | None = None,
                   roi: Roi | None = None,
                   ssim_config: SsimConfig = SsimConfig()) -> MetricBundle:
    """Per-sample control errors plus set diversity for a generation result."""
    errors = [ctrl_err(d, delta_target) for d in delta_pred]
    div = None
    if samples is not None and roi is not None and len(samples) >= 2:
        div = diversity(samples, roi, ssim_config)
    return MetricBundle(
        ctrl_err=float(np.mean(errors)),
        ctrl_err_std=float(np.std(errors)),
        diversity=div,
        sample_count=len(errors),
        delta_pred=[float(d) for d in delta_pred],
    )


# ---------------------------------------------------------------------------
# Radially averaged power spectrum
# ---------------------------------------------------------------------------

def radial_power_spectrum(patches: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Ring-averaged 2-D Fourier power, averaged over patches.

    Every FFT bin belongs to exactly one integer-radius ring about DC, so the
    count-weighted ring sum reproduces the total spectral power. Frequencies
    are normalized by the largest ring radius onto [0, 1].
    """
    if not len(patches):
        raise ValueError("need at least one patch")
    first = np.asarray(patches[0])
    n = first.shape[0]
    if first.shape != (n, n):
        raise ValueError(f"patches must be square, got {first.shape}")

    ix = np.fft.fftfreq(n, d=1.0 / n)  # integer frequency indices
    radius = np.sqrt(ix[:, None] ** 2 + ix[None, :] ** 2)
    ring = np.rint(radius).astype(int)
    counts = np.bincount(ring.ravel())

    mean_power = np.zeros(len(counts), dtype=np.float64)
    for patch in patches:
        patch = np.asarray(patch, dtype=np.float64)
        if patch.shape != (n, n):
            raise ValueError(f"patch shape {patch.shape} differs from first {(n, n)}")
        power = np.abs(np.fft.fft2(patch)) ** 2
        mean_power += np.bincount(ring.ravel(), weights=power.ravel()) / counts
    mean_power /= len(patches)

    freqs = np.arange(len(counts), dtype=np.float64) / ring.max()
    return freqs, mean_power


def ring_counts(n: int) -> np.ndarray:
    """Bin populations of the integer-radius rings for an n x n FFT grid."""
    ix = np.fft.fftfreq(n, d=1.0 / n)
    ring = np.rint(np.sqrt(ix[:, None] ** 2 + ix[None, :] ** 2)).astype(int)
    return np.bincount(ring.ravel())


# ---------------------------------------------------------------------------
# Dataset ambiguity analysis
# ---------------------------------------------------------------------------

def ambiguity_binning(tiles: Sequence[Tile] | TileManifest, bh_bins: int = 6,
                      lst_bins: int = 6, min_count: int = 30) -> list[dict]:
    """Per-bin spread of tile-mean NDVI over a (mean BH, mean LST) grid.

    Bins are equal-width over the observed ranges; bins with fewer than
    ``min_count`` tiles are excluded. Standard deviations are population
    (ddof=0).
    """
    if isinstance(tiles, TileManifest):
        tiles = tiles.load_all()
    if not tiles:
        raise ValueError("need at least one tile")
    bh_mean = np.array([float(t.bh.mean(dtype=np.float64)) for t in tiles])
    lst_mean = np.array([float(t.lst.mean(dtype=np.float64)) for t in tiles])
    ndvi_mean = np.array([float(t.ndvi.mean(dtype=np.float64)) for t in tiles])

    bh_edges = np.linspace(bh_mean.min(), bh_mean.max(), bh_bins + 1)
    lst_edges = np.linspace(lst_mean.min(), lst_mean.max(), lst_bins + 1)
    bh_idx = np.clip(np.digitize(bh_mean, bh_edges[1:-1]), 0, bh_bins - 1)
    lst_idx = np.clip(np.digitize(lst_mean, lst_edges[1:-1]), 0, lst_bins - 1)

    rows = []
    for bi in range(bh_bins):
        for li in range(lst_bins):
            member = (bh_idx == bi) & (lst_idx == li)
            count = int(member.sum())
            if count < min_count:
                continue
            values = ndvi_mean[member]
            rows.append({
                "bh_bin": bi,
                "lst_bin": li,
                "bh_lo": float(bh_edges[bi]),
                "bh_hi": float(bh_edges[bi + 1]),
                "lst_lo": float(lst_edges[li]),
                "lst_hi": float(lst_edges[li + 1]),
                "count": count,
                "ndvi_mean": float(values.mean()),
                "ndvi_std": float(values.std()),
            })
    return rows
