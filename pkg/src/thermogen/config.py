"""Single-document JSON run configuration aggregating every module config."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .edm import CoarseningSpec, EDMConfig, LambdaSchedule, PhysicsSpec
from .forward import ForwardModelConfig
from .net import DenoiserConfig
from .sampler import KarrasSchedule
from .sweep import SweepSpec
from .tiles import Roi, SyntheticWorldConfig
from .training import InverseTrainConfig


@dataclass
class RunConfig:
    data_root: str = "data"
    ckpt_dir: str = "checkpoints"
    out_dir: str = "out"
    seed: int = 0
    synth_tiles: int = 64
    split_cutoff: str = "2020-01-01"
    synthetic: SyntheticWorldConfig = field(default_factory=SyntheticWorldConfig)
    forward: ForwardModelConfig = field(default_factory=ForwardModelConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    edm: EDMConfig = field(default_factory=EDMConfig)
    coarsen: CoarseningSpec = field(default_factory=CoarseningSpec)
    physics: PhysicsSpec = field(default_factory=PhysicsSpec)
    lambda_schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    train: InverseTrainConfig = field(default_factory=InverseTrainConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["sweep"]["roi"] = asdict(self.sweep.roi)
        doc["sweep"]["sampler"] = asdict(self.sweep.sampler)
        return doc

    def to_json(self, path: Path | str | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(doc)
        if "synthetic" in d:
            d["synthetic"] = SyntheticWorldConfig(**d["synthetic"])
        if "forward" in d:
            d["forward"] = ForwardModelConfig(**d["forward"])
        if "denoiser" in d:
            den = dict(d["denoiser"])
            for key in ("channel_multipliers", "attention_resolutions"):
                if key in den:
                    den[key] = tuple(den[key])
            d["denoiser"] = DenoiserConfig(**den)
        if "edm" in d:
            d["edm"] = EDMConfig(**d["edm"])
        if "coarsen" in d:
            d["coarsen"] = CoarseningSpec(**d["coarsen"])
        if "physics" in d:
            d["physics"] = PhysicsSpec(**d["physics"])
        if "lambda_schedule" in d:
            d["lambda_schedule"] = LambdaSchedule(**d["lambda_schedule"])
        if "train" in d:
            d["train"] = InverseTrainConfig(**d["train"])
        if "sweep" in d:
            sw = dict(d["sweep"])
            for key in ("gains", "delta_targets", "tile_ids"):
                if key in sw:
                    sw[key] = tuple(sw[key])
            if "roi" in sw:
                sw["roi"] = Roi(**sw["roi"])
            if "sampler" in sw:
                sw["sampler"] = KarrasSchedule(**sw["sampler"])
            d["sweep"] = SweepSpec(**sw)
        return cls(**d)

    @classmethod
    def from_json(cls, path: Path | str) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
