"""Sweep orchestration: runs the metric grid over models, gains, targets and
tiles, writing raw per-sample JSON-lines plus CSV summaries and figures."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .edm import build_conditioning
from .forward import ForwardModel
from .metrics import diversity, mean_roi, surr_cal_err
from .sampler import (
    EditMask,
    KarrasSchedule,
    apply_condition_edit,
    derive_seed,
    karras_sigmas,
    model_denoise_fn,
    sample_trajectory,
)
from .tiles import Roi, Tile, TileManifest
from .training import InverseModel


@dataclass(frozen=True)
class SweepSpec:
    gains: tuple[float, ...] = (1.0, 2.0, 3.0, 5.0, 8.0)
    delta_targets: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    tile_ids: tuple[str, ...] = ()  # empty means every tile in the manifest
    num_samples: int = 4
    seed: int = 0
    roi: Roi = field(default_factory=lambda: Roi(48, 48, 32, 32))
    sampler: KarrasSchedule = field(default_factory=KarrasSchedule)

    def __post_init__(self) -> None:
        if not self.gains or not self.delta_targets:
            raise ValueError("gains and delta_targets must be non-empty")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")


@dataclass
class SweepReport:
    rows: list[dict]
    by_gain: list[dict]
    best_gain: list[dict]
    raw_path: Path | None = None
    summary_path: Path | None = None
    best_path: Path | None = None


def _batched_samples(model: InverseModel, tile: Tile, cond: np.ndarray,
                     mask_t: torch.Tensor, sigmas: np.ndarray, n: int,
                     seed: int) -> np.ndarray:
    """K paired trajectories as one batch; the seed fixes every noise draw."""
    x_ref = torch.from_numpy(tile.ndvi.astype(np.float32))[None, None].expand(n, -1, -1, -1)
    cond_t = torch.from_numpy(cond)[None]
    fn = model_denoise_fn(model, cond_t)
    gen = torch.Generator().manual_seed(seed)
    out = sample_trajectory(fn, x_ref, mask_t, sigmas, gen)
    return out[:, 0].numpy().astype(np.float32)


def run_sweep(spec: SweepSpec, models: dict[str, InverseModel], forward: ForwardModel,
              manifest: TileManifest, out_dir: Path | str | None = None) -> SweepReport:
    """Evaluate every (model, tile, delta_target, gain) cell of the grid.

    Baseline (delta = 0) sample sets are generated once per (model, tile) and
    paired with every edited set through identical noise seeds. Iteration
    order is deterministic, so fixed seeds give bit-reproducible output.
    """
    tile_ids = list(spec.tile_ids) if spec.tile_ids else manifest.tile_ids()
    missing = [t for t in tile_ids if t not in set(manifest.tile_ids())]
    if missing:
        raise ValueError(f"sweep references unknown tiles: {missing}")
    sigmas = karras_sigmas(spec.sampler)
    rows: list[dict] = []

    for model_name in sorted(models):
        model = models[model_name]
        if model.normalization.spec_id() != forward.normalization.spec_id():
            raise ValueError(f"model {model_name}: checkpoint/normalization mismatch")
        norm = model.normalization
        for tile_index, tile_id in enumerate(tile_ids):
            tile = manifest.load(tile_id)
            roi = spec.roi.validate_within(tile.shape)
            mask_t = EditMask.from_roi(roi, tile.shape).tensor()
            tile_seed = derive_seed(spec.seed, tile_index)
            t_base = tile.t_base()
            t_gt_roi = mean_roi(tile.lst, roi)
            surr = surr_cal_err(forward, tile, roi)

            cond_base = build_conditioning(tile, norm, model.coarsen)
            baselines = _batched_samples(model, tile, cond_base, mask_t, sigmas,
                                         spec.num_samples, tile_seed)
            base_lst = [forward.predict(s, tile.bh, t_base) for s in baselines]
            base_roi_mean = [mean_roi(p, roi) for p in base_lst]
            base_errs = [abs(m - t_gt_roi) for m in base_roi_mean]

            for delta_target in spec.delta_targets:
                for gain in spec.gains:
                    if gain * delta_target == 0.0:
                        samples = baselines
                        deltas = [0.0] * spec.num_samples
                    else:
                        edited = apply_condition_edit(tile.lst, roi, delta_target, gain)
                        cond_edit = build_conditioning(tile, norm, model.coarsen,
                                                       lst_override=edited)
                        samples = _batched_samples(model, tile, cond_edit, mask_t,
                                                   sigmas, spec.num_samples, tile_seed)
                        deltas = [
                            mean_roi(forward.predict(s, tile.bh, t_base), roi) - b
                            for s, b in zip(samples, base_roi_mean)
                        ]
                    div = (diversity(list(samples), roi)
                           if spec.num_samples >= 2 else None)
                    for j in range(spec.num_samples):
                        rows.append({
                            "model": model_name,
                            "tile_id": tile_id,
                            "delta_target": float(delta_target),
                            "gain": float(gain),
                            "sample_index": j,
                            "delta_pred": float(deltas[j]),
                            "ctrl_err": abs(float(deltas[j]) - float(delta_target)),
                            "base_err": float(base_errs[j]),
                            "diversity_cell": div,
                            "surr_cal_err_tile": float(surr),
                            "seed": tile_seed,
                        })

    by_gain = aggregate_by_gain(rows)
    best = select_best_gain(by_gain)
    report = SweepReport(rows=rows, by_gain=by_gain, best_gain=best)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.raw_path = out_dir / "raw_samples.jsonl"
        with open(report.raw_path, "w") as f:
            for row in rows:
                f.write(json.dumps(row) + "\n")
        report.summary_path = write_csv(by_gain, out_dir / "summary_by_gain.csv")
        report.best_path = write_csv(best, out_dir / "summary_best_gain.csv")
    return report


def aggregate_by_gain(rows: Sequence[dict]) -> list[dict]:
    """Group raw sample rows into per-(model, gain) means and spreads.

    Every cell carries the same sample count, so averaging rows equals
    averaging cells; stds are population (ddof=0).
    """
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["model"], row["gain"]), []).append(row)
    table = []
    for (model, gain) in sorted(groups):
        members = groups[(model, gain)]
        errs = np.array([m["ctrl_err"] for m in members])
        divs = [m["diversity_cell"] for m in members if m["diversity_cell"] is not None]
        bases = np.array([m["base_err"] for m in members])
        table.append({
            "model": model,
            "gain": gain,
            "ctrl_err_mean": float(errs.mean()),
            "ctrl_err_std": float(errs.std()),
            "base_err_mean": float(bases.mean()),
            "diversity_mean": float(np.mean(divs)) if divs else None,
            "n_samples": len(members),
        })
    return table


def select_best_gain(by_gain: Sequence[dict]) -> list[dict]:
    """Per model, the gain minimizing mean control error (ties -> lower gain)."""
    best: dict[str, dict] = {}
    for row in by_gain:
        cur = best.get(row["model"])
        if cur is None or (row["ctrl_err_mean"], row["gain"]) < (cur["ctrl_err_mean"],
                                                                 cur["gain"]):
            best[row["model"]] = row
    return [dict(best[m], best_gain=best[m]["gain"]) for m in sorted(best)]


def write_csv(table: Sequence[dict], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not table:
        path.write_text("")
        return path
    fields = list(table[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(table)
    return path


def read_jsonl(path: Path | str) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines()]
