"""Report figures rendered next to the delimited outputs: gain-response
curves, radial spectra, ambiguity bins and generated-sample galleries."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_gain_response_figure(by_gain: Sequence[dict], path: Path | str) -> Path:
    """ROI mean |ΔT| error versus gain, one curve per model."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    models = sorted({row["model"] for row in by_gain})
    for model in models:
        rows = sorted((r for r in by_gain if r["model"] == model), key=lambda r: r["gain"])
        gains = [r["gain"] for r in rows]
        errs = [r["ctrl_err_mean"] for r in rows]
        stds = [r["ctrl_err_std"] for r in rows]
        ax.errorbar(gains, errs, yerr=stds, marker="o", capsize=3, label=model)
    ax.set_xlabel("gain w")
    ax.set_ylabel("ROI mean $\\Delta T$ absolute error (°C)")
    ax.set_title("Controllability vs conditioning gain")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_spectra_figure(freqs: np.ndarray, power_real: np.ndarray,
                        power_generated: np.ndarray, path: Path | str) -> Path:
    """Radially averaged power of real vs generated patches, log-log, DC excluded."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(freqs[1:], power_real[1:], label="real")
    ax.loglog(freqs[1:], power_generated[1:], label="generated", linestyle="--")
    ax.set_xlabel("normalized radial frequency")
    ax.set_ylabel("ring-averaged power")
    ax.set_title(f"Spatial frequency statistics (DC: real {power_real[0]:.3g}, "
                 f"generated {power_generated[0]:.3g})")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_ambiguity_figure(rows: Sequence[dict], path: Path | str) -> Path:
    """Vegetation spread per (building height, temperature) bin; marker size = std."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    if rows:
        bh = [0.5 * (r["bh_lo"] + r["bh_hi"]) for r in rows]
        lst = [0.5 * (r["lst_lo"] + r["lst_hi"]) for r in rows]
        std = np.array([r["ndvi_std"] for r in rows])
        size = 40 + 3000 * std
        sc = ax.scatter(bh, lst, s=size, c=std, cmap="viridis", alpha=0.8,
                        edgecolors="k", linewidths=0.5)
        fig.colorbar(sc, ax=ax, label="NDVI std within bin")
    ax.set_xlabel("mean building height (m)")
    ax.set_ylabel("mean LST (°C)")
    ax.set_title("Within-bin NDVI variability")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_sample_gallery(tile_ndvi: np.ndarray, samples: np.ndarray,
                        lst_pred: np.ndarray, delta_pred: np.ndarray,
                        path: Path | str) -> Path:
    """Per sample: generated NDVI on top, predicted LST below with its ΔT badge."""
    path = Path(path)
    n = len(samples)
    fig, axes = plt.subplots(2, n + 1, figsize=(2.2 * (n + 1), 4.6), squeeze=False)
    axes[0, 0].imshow(tile_ndvi, cmap="RdYlGn", vmin=-1, vmax=1)
    axes[0, 0].set_title("reference NDVI")
    axes[1, 0].axis("off")
    lst_lo = float(np.min(lst_pred))
    lst_hi = float(np.max(lst_pred))
    for j in range(n):
        axes[0, j + 1].imshow(samples[j], cmap="RdYlGn", vmin=-1, vmax=1)
        axes[0, j + 1].set_title(f"sample {j}")
        axes[1, j + 1].imshow(lst_pred[j], cmap="inferno", vmin=lst_lo, vmax=lst_hi)
        axes[1, j + 1].set_title(f"$\\Delta_{{pred}}$ = {delta_pred[j]:+.2f} °C", fontsize=9)
    for ax in axes.ravel():
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def colormapped_png_bytes(raster: np.ndarray, cmap: str = "viridis",
                          vmin: float | None = None, vmax: float | None = None) -> bytes:
    """8-bit colormapped PNG of a raster, for preview payloads."""
    import io

    from PIL import Image

    arr = np.asarray(raster, dtype=np.float64)
    lo = float(arr.min()) if vmin is None else vmin
    hi = float(arr.max()) if vmax is None else vmax
    span = hi - lo if hi > lo else 1.0
    norm = np.clip((arr - lo) / span, 0.0, 1.0)
    rgba = (plt.get_cmap(cmap)(norm) * 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(rgba[..., :3]).save(buf, format="PNG")
    return buf.getvalue()
