"""Learned forward model: per-pixel temperature change from vegetation and building height.

The network predicts a normalized temperature residual; the public surface
works in °C by scaling with the manifest normalization. An untrained model
predicts zero change (zero-initialized output head), so ``predict`` returns
the baseline temperature everywhere.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .tiles import NormalizationSpec, Tile


@dataclass(frozen=True)
class ForwardModelConfig:
    encoder_depth: int = 3
    base_channels: int = 32
    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 3e-4
    weight_decay: float = 1e-4
    urban_weight: float = 5.0

    def __post_init__(self) -> None:
        if self.urban_weight < 1:
            raise ValueError("urban_weight must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


def group_norm(channels: int) -> nn.GroupNorm:
    groups = 8
    while channels % groups:
        groups //= 2
    return nn.GroupNorm(groups, channels)


def _conv_block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1),
        group_norm(c_out),
        nn.SiLU(),
        nn.Conv2d(c_out, c_out, 3, padding=1),
        group_norm(c_out),
        nn.SiLU(),
    )


class DeltaTNet(nn.Module):
    """Encoder-decoder with skip connections, 2-channel input -> 1-channel residual."""

    def __init__(self, base_channels: int = 32, depth: int = 3):
        super().__init__()
        self.depth = depth
        chans = [base_channels * min(2 ** i, 4) for i in range(depth + 1)]
        self.stem = nn.Conv2d(2, chans[0], 3, padding=1)
        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        for i in range(depth):
            self.down_blocks.append(_conv_block(chans[i], chans[i]))
            self.downsamples.append(nn.Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1))
        self.middle = _conv_block(chans[depth], chans[depth])
        self.up_convs = nn.ModuleList()
        self.up_blocks = nn.ModuleList()
        for i in reversed(range(depth)):
            self.up_convs.append(nn.Conv2d(chans[i + 1], chans[i], 3, padding=1))
            self.up_blocks.append(_conv_block(2 * chans[i], chans[i]))
        self.head = nn.Conv2d(chans[0], 1, 3, padding=1)
        # Zero head: the untrained model predicts no temperature change.
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.stem(x)
        skips = []
        for block, down in zip(self.down_blocks, self.downsamples):
            h = block(h)
            skips.append(h)
            h = down(h)
        h = self.middle(h)
        for conv, block, skip in zip(self.up_convs, self.up_blocks, reversed(skips)):
            h = conv(nn.functional.interpolate(h, size=skip.shape[-2:], mode="nearest"))
            h = block(torch.cat([h, skip], dim=1))
        return self.head(h)


def t_base(tile: Tile) -> float:
    """Per-tile baseline temperature: the arithmetic mean of the LST raster, °C."""
    return tile.t_base()


def urban_weighted_mse(pred: torch.Tensor, gt: torch.Tensor, bh: torch.Tensor,
                       w_urban: float) -> torch.Tensor:
    """Weighted MSE with weight w_urban on urban pixels (bh > 0), normalized by the weight sum."""
    if pred.shape != gt.shape or pred.shape != bh.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)}, gt {tuple(gt.shape)}, "
                         f"bh {tuple(bh.shape)}")
    weights = torch.where(bh > 0, torch.full_like(pred, w_urban), torch.ones_like(pred))
    return (weights * (pred - gt) ** 2).sum() / weights.sum()


class FrozenModelError(RuntimeError):
    """Raised when attempting to mutate a frozen model."""


class ForwardModel:
    """Wrapper over the residual network plus normalization and freeze state."""

    def __init__(self, net: nn.Module, config: ForwardModelConfig,
                 normalization: NormalizationSpec, training_seed: int = 0,
                 val_mae: float = float("nan")):
        self.net = net
        self.config = config
        self.normalization = normalization
        self.training_seed = training_seed
        self.val_mae = val_mae
        self.val_mae_history: list[float] = []
        self.frozen = False

    def freeze(self) -> "ForwardModel":
        self.net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)
        self.frozen = True
        return self

    def delta_celsius(self, ndvi: torch.Tensor, bh_norm: torch.Tensor) -> torch.Tensor:
        """Temperature change in °C as a differentiable function of its inputs.

        Expects (B,1,H,W) tensors; bh normalized by the spec's bh_scale.
        Gradients flow to the inputs even when the weights are frozen.
        """
        if ndvi.shape != bh_norm.shape:
            raise ValueError(f"shape mismatch: ndvi {tuple(ndvi.shape)} vs bh {tuple(bh_norm.shape)}")
        out = self.net(torch.cat([ndvi, bh_norm], dim=1))
        return out * self.normalization.lst_scale

    def predict(self, ndvi: np.ndarray, bh: np.ndarray, t_base: float) -> np.ndarray:
        """Predicted LST raster in °C: t_base + delta(ndvi, bh)."""
        if ndvi.shape != bh.shape:
            raise ValueError(f"shape mismatch: ndvi {ndvi.shape} vs bh {bh.shape}")
        dtype = next(self.net.parameters()).dtype
        with torch.no_grad():
            ndvi_t = torch.from_numpy(np.array(ndvi, dtype=np.float32))[None, None].to(dtype)
            bh_t = torch.from_numpy(
                np.array(bh, dtype=np.float32) / np.float32(self.normalization.bh_scale)
            )[None, None].to(dtype)
            delta = self.delta_celsius(ndvi_t, bh_t)
        return (t_base + delta[0, 0].double().numpy()).astype(np.float32)

    def save(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {
            "config": asdict(self.config),
            "normalization": asdict(self.normalization),
            "normalization_id": self.normalization.spec_id(),
            "training_seed": self.training_seed,
            "val_mae": self.val_mae,
        }
        torch.save({"kind": "forward", "header": header,
                    "state": self.net.state_dict()}, path)
        path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path: Path | str) -> "ForwardModel":
        blob = torch.load(Path(path), map_location="cpu", weights_only=False)
        if blob.get("kind") != "forward":
            raise ValueError(f"{path} is not a forward-model checkpoint")
        header = blob["header"]
        config = ForwardModelConfig(**header["config"])
        net = DeltaTNet(config.base_channels, config.encoder_depth)
        net.load_state_dict(blob["state"])
        model = cls(net, config, NormalizationSpec(**header["normalization"]),
                    training_seed=header["training_seed"], val_mae=header["val_mae"])
        return model.freeze()


def _stack_training_arrays(tiles: Sequence[Tile], spec: NormalizationSpec):
    ndvi = np.stack([t.ndvi for t in tiles])[:, None]
    bh = np.stack([t.bh for t in tiles])[:, None]
    t_bases = np.array([t.t_base() for t in tiles], dtype=np.float32)
    delta_n = (np.stack([t.lst for t in tiles])[:, None]
               - t_bases[:, None, None, None]) / spec.lst_scale
    x = torch.from_numpy(np.concatenate([ndvi, bh / spec.bh_scale], axis=1).astype(np.float32))
    y = torch.from_numpy(delta_n.astype(np.float32))
    bh_t = torch.from_numpy(bh.astype(np.float32))
    return x, y, bh_t


def _urban_mae_celsius(model_net: nn.Module, x: torch.Tensor, y: torch.Tensor,
                       bh: torch.Tensor, lst_scale: float, batch_size: int) -> float:
    abs_err_sum, count = 0.0, 0
    all_err_sum, all_count = 0.0, 0
    with torch.no_grad():
        for i in range(0, x.shape[0], batch_size):
            pred = model_net(x[i:i + batch_size])
            err = (pred - y[i:i + batch_size]).abs() * lst_scale
            urban = bh[i:i + batch_size] > 0
            abs_err_sum += float(err[urban].sum())
            count += int(urban.sum())
            all_err_sum += float(err.sum())
            all_count += err.numel()
    if count == 0:
        # Degenerate validation set with no urban pixels: fall back to all-pixel MAE.
        return all_err_sum / all_count
    return abs_err_sum / count


def train_forward(train_tiles: Sequence[Tile], val_tiles: Sequence[Tile],
                  config: ForwardModelConfig, normalization: NormalizationSpec,
                  seed: int = 0) -> ForwardModel:
    """Train the residual predictor and return the best-on-validation model, frozen.

    Checkpoint selection minimizes validation MAE in °C restricted to urban
    pixels (all pixels if the validation set has none).
    """
    if not train_tiles or not val_tiles:
        raise ValueError("train and validation sets must be non-empty")
    torch.manual_seed(seed)
    net = DeltaTNet(config.base_channels, config.encoder_depth)
    model = ForwardModel(net, config, normalization, training_seed=seed)

    x_tr, y_tr, bh_tr = _stack_training_arrays(train_tiles, normalization)
    x_va, y_va, bh_va = _stack_training_arrays(val_tiles, normalization)

    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate,
                           weight_decay=config.weight_decay)
    shuffler = torch.Generator().manual_seed(seed)
    best_state = copy.deepcopy(net.state_dict())
    best_mae = _urban_mae_celsius(net, x_va, y_va, bh_va, normalization.lst_scale,
                                  config.batch_size)
    model.val_mae_history.append(best_mae)

    step = 0
    for _ in range(config.epochs):
        order = torch.randperm(x_tr.shape[0], generator=shuffler)
        net.train()
        for i in range(0, len(order), config.batch_size):
            idx = order[i:i + config.batch_size]
            opt.zero_grad()
            pred = net(x_tr[idx])
            loss = urban_weighted_mse(pred, y_tr[idx], bh_tr[idx], config.urban_weight)
            if not torch.isfinite(loss):
                raise RuntimeError(f"forward training diverged at step {step}")
            loss.backward()
            opt.step()
            step += 1
        net.eval()
        mae = _urban_mae_celsius(net, x_va, y_va, bh_va, normalization.lst_scale,
                                 config.batch_size)
        model.val_mae_history.append(mae)
        if mae < best_mae:
            best_mae = mae
            best_state = copy.deepcopy(net.state_dict())

    net.load_state_dict(best_state)
    model.val_mae = best_mae
    return model.freeze()
