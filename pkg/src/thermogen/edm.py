"""EDM-style diffusion machinery: noise sampling, preconditioning, the
weighted denoising loss, coarsened temperature conditioning, the pooled
physics penalty and its ramped weight schedule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import torch
from scipy import ndimage

from .tiles import NormalizationSpec, Tile

if TYPE_CHECKING:
    from .forward import ForwardModel


@dataclass(frozen=True)
class EDMConfig:
    sigma_data: float = 0.5
    p_mean: float = -1.2
    p_std: float = 1.2

    def __post_init__(self) -> None:
        if self.sigma_data <= 0:
            raise ValueError("sigma_data must be > 0")
        if self.p_std <= 0:
            raise ValueError("p_std must be > 0")


def sample_sigma(config: EDMConfig, n: int, generator: torch.Generator) -> torch.Tensor:
    """Log-normal noise levels: sigma = exp(p_mean + p_std * n), n ~ N(0, 1)."""
    normal = torch.randn(n, generator=generator, dtype=torch.float32)
    return torch.exp(config.p_mean + config.p_std * normal)


def precondition_coeffs(sigma, sigma_data):
    """(c_in, c_skip, c_out) for a noise level; works on scalars, arrays and tensors."""
    denom = sigma * sigma + sigma_data * sigma_data
    c_in = denom ** -0.5
    c_skip = sigma_data * sigma_data / denom
    c_out = sigma * sigma_data * denom ** -0.5
    return c_in, c_skip, c_out


def loss_weight(sigma, sigma_data):
    """EDM loss weight w(sigma) = (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2."""
    return (sigma * sigma + sigma_data * sigma_data) / (sigma * sigma_data) ** 2


def denoise(net: torch.nn.Module, z: torch.Tensor, sigma: torch.Tensor,
            cond: torch.Tensor, config: EDMConfig) -> torch.Tensor:
    """Preconditioned denoised estimate x0_hat; conditioning channels enter clean."""
    if z.shape[0] != cond.shape[0] or z.shape[-2:] != cond.shape[-2:]:
        raise ValueError(f"shape mismatch: z {tuple(z.shape)} vs cond {tuple(cond.shape)}")
    sigma = sigma.reshape(-1)
    c_in, c_skip, c_out = precondition_coeffs(sigma.to(z.dtype), config.sigma_data)
    c_in = c_in.view(-1, 1, 1, 1)
    c_skip = c_skip.view(-1, 1, 1, 1)
    c_out = c_out.view(-1, 1, 1, 1)
    net_out = net(torch.cat([c_in * z, cond], dim=1), sigma.to(z.dtype))
    return c_skip * z + c_out * net_out


def diffusion_loss(x: torch.Tensor, x0_hat: torch.Tensor, sigma: torch.Tensor,
                   config: EDMConfig) -> torch.Tensor:
    """Weighted denoising loss: per-sample pixel-mean squared error times w(sigma)."""
    if x.shape != x0_hat.shape:
        raise ValueError(f"shape mismatch: x {tuple(x.shape)} vs x0_hat {tuple(x0_hat.shape)}")
    w = loss_weight(sigma.to(x.dtype), config.sigma_data)
    per_sample = ((x0_hat - x) ** 2).mean(dim=(1, 2, 3))
    return (w * per_sample).mean()


# ---------------------------------------------------------------------------
# Coarsened conditioning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoarseningSpec:
    """Block-average downsampling followed by an upsample back to full size."""

    k: int = 32
    method: str = "nearest"  # "bilinear" available behind the flag

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("coarsening factor k must be >= 1")
        if self.method not in ("nearest", "bilinear"):
            raise ValueError(f"unknown upsampling method {self.method!r}")


def block_mean(field: np.ndarray, k: int) -> np.ndarray:
    """Non-overlapping k x k average pooling after cropping to the largest multiple of k."""
    h, w = field.shape
    hc, wc = (h // k) * k, (w // k) * k
    if hc == 0 or wc == 0:
        raise ValueError(f"pooling factor {k} larger than raster {h}x{w}")
    cropped = field[:hc, :wc].astype(np.float64)
    return cropped.reshape(hc // k, k, wc // k, k).mean(axis=(1, 3))


def coarsen_lst(t: np.ndarray, spec: CoarseningSpec) -> np.ndarray:
    """Down-then-up coarsening; each k x k block becomes constant at its mean."""
    t = np.asarray(t)
    if spec.k == 1:
        return t.copy()
    h, w = t.shape
    pooled = block_mean(t, spec.k)
    if spec.method == "bilinear":
        up = ndimage.zoom(pooled, (h / pooled.shape[0], w / pooled.shape[1]), order=1,
                          grid_mode=True, mode="nearest")
        return up.astype(t.dtype)
    up = np.repeat(np.repeat(pooled, spec.k, axis=0), spec.k, axis=1)
    if up.shape != (h, w):
        # Remainder rows/cols (k does not divide the raster): edge-replicate.
        up = np.pad(up, ((0, h - up.shape[0]), (0, w - up.shape[1])), mode="edge")
    return up.astype(t.dtype)


def build_conditioning(tile: Tile, norm: NormalizationSpec, spec: CoarseningSpec,
                       lst_override: np.ndarray | None = None) -> np.ndarray:
    """(2, H, W) float32 conditioning: [bh / bh_scale, coarsened normalized LST].

    ``lst_override`` substitutes an edited LST raster (still in °C) for the
    tile's own, so edited inference conditioning traverses the exact training
    transform.
    """
    lst = tile.lst if lst_override is None else lst_override
    lst_n = (np.asarray(lst, dtype=np.float64) - norm.lst_center) / norm.lst_scale
    bh_n = tile.bh.astype(np.float64) / norm.bh_scale
    return np.stack([bh_n, coarsen_lst(lst_n, spec)]).astype(np.float32)


# ---------------------------------------------------------------------------
# Physics loss and its schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhysicsSpec:
    k_pool: int = 32

    def __post_init__(self) -> None:
        if self.k_pool < 1:
            raise ValueError("k_pool must be >= 1")


def physics_loss(x0_hat: torch.Tensor, bh_norm: torch.Tensor, t_base: torch.Tensor,
                 t_gt: torch.Tensor, spec: PhysicsSpec,
                 forward: "ForwardModel") -> torch.Tensor:
    """L1 penalty between block-pooled predicted and observed temperature, °C.

    The predicted temperature differentiates through the frozen forward model
    into x0_hat; the forward weights receive no gradient.
    """
    delta = forward.delta_celsius(x0_hat, bh_norm)
    t_hat = t_base.view(-1, 1, 1, 1).to(delta.dtype) + delta
    k = spec.k_pool
    h, w = t_hat.shape[-2:]
    hc, wc = (h // k) * k, (w // k) * k
    if hc == 0 or wc == 0:
        raise ValueError(f"k_pool {k} larger than raster {h}x{w}")
    pooled_hat = torch.nn.functional.avg_pool2d(t_hat[..., :hc, :wc], k)
    pooled_gt = torch.nn.functional.avg_pool2d(t_gt.to(delta.dtype)[..., :hc, :wc], k)
    return (pooled_hat - pooled_gt).abs().mean(dim=(1, 2, 3)).mean()


@dataclass(frozen=True)
class LambdaSchedule:
    """Physics-loss weight: zero during warmup, then a linear ramp to lambda_max."""

    lambda_max: float = 16.0
    s_warm: int = 5000
    s_ramp: int = 10000

    def __post_init__(self) -> None:
        if self.lambda_max < 0:
            raise ValueError("lambda_max must be >= 0")
        if self.s_ramp < 1:
            raise ValueError("s_ramp must be >= 1")


def lambda_at(schedule: LambdaSchedule, step: int) -> float:
    if step < schedule.s_warm:
        return 0.0
    if step < schedule.s_warm + schedule.s_ramp:
        return schedule.lambda_max * (step - schedule.s_warm) / schedule.s_ramp
    return schedule.lambda_max


# ---------------------------------------------------------------------------
# Total training objective
# ---------------------------------------------------------------------------

@dataclass
class TrainingBatch:
    """One optimizer step's tensors.

    cond channel 0 is normalized building height, channel 1 the (possibly
    coarsened) normalized LST. t_gt and t_base are in °C.
    """

    x: torch.Tensor       # (B, 1, H, W) target NDVI
    cond: torch.Tensor    # (B, 2, H, W)
    t_gt: torch.Tensor    # (B, 1, H, W)
    t_base: torch.Tensor  # (B,)
    sigma: torch.Tensor   # (B,)
    eps: torch.Tensor     # (B, 1, H, W)

    def __post_init__(self) -> None:
        if bool((self.sigma <= 0).any()):
            raise ValueError("sigma must be positive")


def total_loss(batch: TrainingBatch, net: torch.nn.Module, forward: "ForwardModel",
               edm: EDMConfig, phys: PhysicsSpec,
               lam: float) -> tuple[torch.Tensor, float, float]:
    """L = L_diff + lam * L_phys. Returns (loss, loss_diff value, loss_phys value)."""
    z = batch.x + batch.sigma.view(-1, 1, 1, 1).to(batch.x.dtype) * batch.eps
    x0_hat = denoise(net, z, batch.sigma, batch.cond, edm)
    l_diff = diffusion_loss(batch.x, x0_hat, batch.sigma, edm)
    bh_norm = batch.cond[:, :1]
    if lam > 0:
        l_phys = physics_loss(x0_hat, bh_norm, batch.t_base, batch.t_gt, phys, forward)
        total = l_diff + lam * l_phys
    else:
        with torch.no_grad():
            l_phys = physics_loss(x0_hat.detach(), bh_norm, batch.t_base, batch.t_gt,
                                  phys, forward)
        total = l_diff
    return total, float(l_diff.detach()), float(l_phys.detach())
