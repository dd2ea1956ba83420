import pytest

from thermogen.config import RunConfig
from thermogen.edm import CoarseningSpec, EDMConfig, LambdaSchedule, PhysicsSpec
from thermogen.forward import ForwardModelConfig
from thermogen.net import DenoiserConfig
from thermogen.sampler import KarrasSchedule
from thermogen.sweep import SweepSpec
from thermogen.tiles import Roi, SyntheticWorldConfig
from thermogen.training import InverseTrainConfig


def tiny_run_config(data_root, ckpt_dir, out_dir) -> RunConfig:
    """A 16x16 pipeline configuration small enough for unit tests."""
    return RunConfig(
        data_root=str(data_root),
        ckpt_dir=str(ckpt_dir),
        out_dir=str(out_dir),
        seed=0,
        synth_tiles=12,
        split_cutoff="2019-01-09",
        synthetic=SyntheticWorldConfig(size=16, noise_std=0.2),
        forward=ForwardModelConfig(base_channels=8, encoder_depth=2, epochs=1,
                                   batch_size=4),
        denoiser=DenoiserConfig(image_size=16, base_channels=8,
                                channel_multipliers=(1, 2), blocks_per_resolution=1,
                                attention_resolutions=(8,)),
        edm=EDMConfig(),
        coarsen=CoarseningSpec(k=4),
        physics=PhysicsSpec(k_pool=4),
        lambda_schedule=LambdaSchedule(lambda_max=4.0, s_warm=2, s_ramp=4),
        train=InverseTrainConfig(steps=8, batch_size=2, checkpoint_every=4,
                                 lr_warmup_steps=4),
        sweep=SweepSpec(gains=(1.0, 3.0), delta_targets=(-1.0, 0.0), num_samples=2,
                        roi=Roi(4, 4, 8, 8), sampler=KarrasSchedule(steps=6)),
    )


@pytest.fixture(scope="session")
def trained_pipeline(tmp_path_factory):
    """synth-data + train-forward + train-inverse once for CLI/server tests."""
    from thermogen.cli import main

    root = tmp_path_factory.mktemp("pipeline")
    data, ckpt, out = root / "data", root / "ckpt", root / "out"
    cfg = tiny_run_config(data, ckpt, out)
    cfg_path = root / "config.json"
    cfg.to_json(cfg_path)
    assert main(["synth-data", "--config", str(cfg_path)]) == 0
    assert main(["train-forward", "--config", str(cfg_path)]) == 0
    assert main(["train-inverse", "--config", str(cfg_path)]) == 0
    return {"root": root, "config": cfg, "config_path": cfg_path,
            "data": data, "ckpt": ckpt, "out": out}
