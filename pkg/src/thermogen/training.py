"""Inverse-model training: couples the denoiser to the frozen forward model
through the pooled physics penalty, with JSON-lines step metrics and
resumable checkpoints carrying optimizer and RNG state."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .edm import (
    CoarseningSpec,
    EDMConfig,
    LambdaSchedule,
    PhysicsSpec,
    TrainingBatch,
    build_conditioning,
    denoise,
    lambda_at,
    sample_sigma,
    total_loss,
)
from .forward import ForwardModel
from .net import CondDenoiser, DenoiserConfig
from .tiles import NormalizationSpec, Tile


@dataclass(frozen=True)
class InverseTrainConfig:
    steps: int = 24000
    batch_size: int = 16
    learning_rate: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    grad_clip: float = 1.0
    lr_warmup_steps: int = 5000
    checkpoint_every: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


class InverseModel:
    """Frozen denoiser plus every config needed to reproduce its conditioning."""

    def __init__(self, net: CondDenoiser, denoiser: DenoiserConfig, edm: EDMConfig,
                 coarsen: CoarseningSpec, normalization: NormalizationSpec,
                 step: int = 0, seed: int = 0):
        self.net = net
        self.denoiser_config = denoiser
        self.edm = edm
        self.coarsen = coarsen
        self.normalization = normalization
        self.step = step
        self.seed = seed
        self.frozen = False

    def freeze(self) -> "InverseModel":
        self.net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)
        self.frozen = True
        return self

    def denoise(self, z: torch.Tensor, sigma: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return denoise(self.net, z, sigma, cond, self.edm)

    def header(self) -> dict:
        return {
            "denoiser": asdict(self.denoiser_config),
            "edm": asdict(self.edm),
            "coarsen": asdict(self.coarsen),
            "normalization": asdict(self.normalization),
            "normalization_id": self.normalization.spec_id(),
            "step": self.step,
            "seed": self.seed,
        }

    def save(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = self.header()
        _atomic_torch_save({"kind": "inverse", "header": header,
                            "state": self.net.state_dict()}, path)
        path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path: Path | str) -> "InverseModel":
        blob = torch.load(Path(path), map_location="cpu", weights_only=False)
        if blob.get("kind") not in ("inverse", "inverse-checkpoint"):
            raise ValueError(f"{path} is not an inverse-model checkpoint")
        h = blob["header"]
        denoiser_cfg = DenoiserConfig(**{k: tuple(v) if isinstance(v, list) else v
                                         for k, v in h["denoiser"].items()})
        net = CondDenoiser(denoiser_cfg)
        net.load_state_dict(blob["state"])
        model = cls(net, denoiser_cfg, EDMConfig(**h["edm"]),
                    CoarseningSpec(**h["coarsen"]),
                    NormalizationSpec(**h["normalization"]),
                    step=h["step"], seed=h["seed"])
        return model.freeze()


def _atomic_torch_save(obj: dict, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(obj, tmp)
    os.replace(tmp, path)


def _stack_inverse_arrays(tiles: Sequence[Tile], norm: NormalizationSpec,
                          coarsen: CoarseningSpec):
    x = torch.from_numpy(np.stack([t.ndvi for t in tiles])[:, None].astype(np.float32))
    cond = torch.from_numpy(np.stack([build_conditioning(t, norm, coarsen) for t in tiles]))
    t_gt = torch.from_numpy(np.stack([t.lst for t in tiles])[:, None].astype(np.float32))
    t_base = torch.tensor([t.t_base() for t in tiles], dtype=torch.float32)
    return x, cond, t_gt, t_base


def train_inverse(train_tiles: Sequence[Tile], forward: ForwardModel,
                  denoiser_cfg: DenoiserConfig, edm: EDMConfig,
                  coarsen: CoarseningSpec, physics: PhysicsSpec,
                  schedule: LambdaSchedule, train_cfg: InverseTrainConfig,
                  out_dir: Path | str, resume_from: Path | str | None = None) -> InverseModel:
    """Run the inverse training loop and return the final model, frozen.

    Writes per-step metrics to ``out_dir/train_log.jsonl`` and periodic
    resumable checkpoints ``ckpt_step*.pt``. Resuming from a checkpoint with
    the same inputs reproduces the uninterrupted run bit-exactly (single
    worker).
    """
    if not forward.frozen:
        raise ValueError("forward model must be frozen before inverse training")
    if not train_tiles:
        raise ValueError("training set must be non-empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    norm = forward.normalization
    x, cond, t_gt, t_base = _stack_inverse_arrays(train_tiles, norm, coarsen)
    n_tiles = x.shape[0]

    torch.manual_seed(train_cfg.seed)
    net = CondDenoiser(denoiser_cfg)
    opt = torch.optim.Adam(net.parameters(), lr=train_cfg.learning_rate,
                           betas=(train_cfg.adam_beta1, train_cfg.adam_beta2))
    gen = torch.Generator().manual_seed(train_cfg.seed)
    start_step = 0

    if resume_from is not None:
        blob = torch.load(Path(resume_from), map_location="cpu", weights_only=False)
        if blob.get("kind") != "inverse-checkpoint":
            raise ValueError(f"{resume_from} is not a resumable checkpoint")
        net.load_state_dict(blob["state"])
        opt.load_state_dict(blob["opt_state"])
        gen.set_state(blob["gen_state"])
        start_step = blob["header"]["step"]

    log_path = out_dir / "train_log.jsonl"
    log_file = open(log_path, "a")

    model = InverseModel(net, denoiser_cfg, edm, coarsen, norm, seed=train_cfg.seed)
    try:
        for step in range(start_step, train_cfg.steps):
            warm = min(1.0, (step + 1) / max(1, train_cfg.lr_warmup_steps))
            lr = train_cfg.learning_rate * warm
            for group in opt.param_groups:
                group["lr"] = lr

            idx = torch.randint(0, n_tiles, (train_cfg.batch_size,), generator=gen)
            sigma = sample_sigma(edm, train_cfg.batch_size, gen)
            eps = torch.randn((train_cfg.batch_size, 1, *x.shape[-2:]), generator=gen)
            batch = TrainingBatch(x=x[idx], cond=cond[idx], t_gt=t_gt[idx],
                                  t_base=t_base[idx], sigma=sigma, eps=eps)
            lam = lambda_at(schedule, step)
            loss, l_diff, l_phys = total_loss(batch, net, forward, edm, physics, lam)
            if not torch.isfinite(loss):
                raise RuntimeError(f"inverse training diverged at step {step}")
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(net.parameters(), train_cfg.grad_clip)
            opt.step()

            log_file.write(json.dumps({
                "step": step, "loss_diff": l_diff, "loss_phys": l_phys,
                "lambda": lam, "lr": lr,
            }) + "\n")

            done = step + 1
            if done % train_cfg.checkpoint_every == 0 or done == train_cfg.steps:
                model.step = done
                _atomic_torch_save({
                    "kind": "inverse-checkpoint",
                    "header": {**model.header(), "step": done,
                               "train": asdict(train_cfg), "physics": asdict(physics),
                               "lambda_schedule": asdict(schedule)},
                    "state": net.state_dict(),
                    "opt_state": opt.state_dict(),
                    "gen_state": gen.get_state(),
                    "step": done,
                }, out_dir / f"ckpt_step{done:07d}.pt")
    finally:
        log_file.close()

    model.step = train_cfg.steps
    return model.freeze()


def make_val_pack(tiles: Sequence[Tile], norm: NormalizationSpec,
                  coarsen: CoarseningSpec, edm: EDMConfig, seed: int = 1234,
                  draws_per_tile: int = 4) -> dict:
    """Fixed (sigma, eps) draws per validation tile so loss curves are comparable."""
    x, cond, t_gt, t_base = _stack_inverse_arrays(tiles, norm, coarsen)
    gen = torch.Generator().manual_seed(seed)
    n = x.shape[0] * draws_per_tile
    rep = lambda t: t.repeat_interleave(draws_per_tile, dim=0)
    return {
        "x": rep(x), "cond": rep(cond),
        "sigma": sample_sigma(edm, n, gen),
        "eps": torch.randn((n, 1, *x.shape[-2:]), generator=gen),
    }


def val_diffusion_loss(net: torch.nn.Module, pack: dict, edm: EDMConfig,
                       batch_size: int = 16) -> float:
    """Mean weighted denoising loss of the pack under the current weights."""
    from .edm import diffusion_loss
    losses = []
    with torch.no_grad():
        for i in range(0, pack["x"].shape[0], batch_size):
            sl = slice(i, i + batch_size)
            z = pack["x"][sl] + pack["sigma"][sl].view(-1, 1, 1, 1) * pack["eps"][sl]
            x0 = denoise(net, z, pack["sigma"][sl], pack["cond"][sl], edm)
            losses.append(float(diffusion_loss(pack["x"][sl], x0, pack["sigma"][sl], edm))
                          * (z.shape[0]))
    return sum(losses) / pack["x"].shape[0]
