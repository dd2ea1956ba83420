"""Command-line entry points for every pipeline stage.

Every subcommand accepts ``--config <file>`` (single JSON document) and
``--seed``; paths fall back to THERMOGEN_DATA_ROOT / THERMOGEN_CKPT_DIR.
Exit codes: 0 success, 2 configuration/usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .tiles import Roi, TileError, TilingGrid


class ConfigError(Exception):
    """Bad configuration or arguments; maps to exit code 2."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermogen",
        description="Forward surface-temperature modeling and diffusion-based "
                    "inverse generation of vegetation layouts.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--data-root", type=Path)
        p.add_argument("--ckpt-dir", type=Path)
        p.add_argument("--out-dir", type=Path)

    p = sub.add_parser("synth-data", help="generate a synthetic tile manifest")
    common(p)
    p.add_argument("--tiles", type=int, help="number of tiles (default from config)")

    p = sub.add_parser("ingest", help="tile externally exported rasters")
    common(p)
    p.add_argument("--src", type=Path, required=True, help="export directory")
    p.add_argument("--tile-px", type=int, default=128)

    p = sub.add_parser("train-forward", help="train the temperature-change predictor")
    common(p)

    p = sub.add_parser("train-inverse", help="train the conditional diffusion model")
    common(p)
    p.add_argument("--resume", type=Path, help="resume from a checkpoint")
    p.add_argument("--name", default="inverse", help="checkpoint name")

    p = sub.add_parser("generate", help="sample vegetation layouts for an edit")
    common(p)
    p.add_argument("--tile", required=True)
    p.add_argument("--roi", default=None, help="x,y,w,h (default: centered)")
    p.add_argument("--delta", type=float, default=0.0, help="target ΔT in °C")
    p.add_argument("--gain", type=float, default=3.0)
    p.add_argument("--n", type=int, default=4, help="number of samples")
    p.add_argument("--steps", type=int, default=None, help="sampler steps override")

    p = sub.add_parser("evaluate", help="run the metric sweep over checkpoints")
    common(p)

    p = sub.add_parser("spectra", help="radial power spectra of real vs generated patches")
    common(p)
    p.add_argument("--n", type=int, default=2, help="samples per tile")

    p = sub.add_parser("ambiguity", help="NDVI spread over (BH, LST) bins")
    common(p)
    p.add_argument("--min-count", type=int, default=30)

    p = sub.add_parser("serve", help="run the HTTP JSON service")
    common(p)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", type=Path, default=None,
                   help="serve a built frontend (directory with index.html) at /")

    return parser


def _load_config(args) -> RunConfig:
    if args.config is not None:
        if not Path(args.config).exists():
            raise ConfigError(f"config file not found: {args.config}")
        try:
            cfg = RunConfig.from_json(args.config)
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config {args.config}: {exc}") from exc
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _data_root(args, cfg: RunConfig) -> Path:
    return Path(args.data_root or os.environ.get("THERMOGEN_DATA_ROOT") or cfg.data_root)


def _ckpt_dir(args, cfg: RunConfig) -> Path:
    return Path(args.ckpt_dir or os.environ.get("THERMOGEN_CKPT_DIR") or cfg.ckpt_dir)


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out_dir or cfg.out_dir)


def _manifest(args, cfg: RunConfig):
    from .tiles import TileManifest

    path = _data_root(args, cfg) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}; run synth-data or ingest first")
    return TileManifest.from_file(path)


def _load_models(args, cfg: RunConfig):
    from .forward import ForwardModel
    from .training import InverseModel

    ckpt_dir = _ckpt_dir(args, cfg)
    fwd_path = ckpt_dir / "forward.pt"
    if not fwd_path.exists():
        raise FileNotFoundError(f"missing forward checkpoint {fwd_path}")
    forward = ForwardModel.load(fwd_path)
    inverses = {}
    for path in sorted(ckpt_dir.glob("inverse*.pt")):
        inverses[path.stem] = InverseModel.load(path)
    if not inverses:
        raise FileNotFoundError(f"no inverse*.pt checkpoints in {ckpt_dir}")
    return forward, inverses, ckpt_dir


def _parse_roi(text: str | None, shape: tuple[int, int]) -> Roi:
    if text is None:
        return Roi.centered(shape, min(32, min(shape) // 2))
    try:
        x, y, w, h = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --roi {text!r}, expected x,y,w,h") from exc
    return Roi(x, y, w, h)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth_data(args, cfg: RunConfig) -> int:
    from .tiles import build_synthetic_manifest

    world = dataclasses.replace(cfg.synthetic, seed=cfg.seed)
    count = args.tiles if args.tiles is not None else cfg.synth_tiles
    root = _data_root(args, cfg)
    manifest = build_synthetic_manifest(world, count, root)
    print(f"wrote {len(manifest)} tiles and {root / 'manifest.json'}")
    return 0


def cmd_ingest(args, cfg: RunConfig) -> int:
    from .tiles import ingest_raster_export

    manifest = ingest_raster_export(args.src, _data_root(args, cfg),
                                    TilingGrid(tile_px=args.tile_px))
    print(f"ingested {len(manifest)} tiles into {_data_root(args, cfg)}")
    return 0


def cmd_train_forward(args, cfg: RunConfig) -> int:
    from .forward import train_forward
    from .tiles import make_splits

    manifest = _manifest(args, cfg)
    train_split, _ = make_splits(manifest, cfg.split_cutoff)
    tiles = train_split.load_all()
    n_val = max(1, len(tiles) // 5)
    model = train_forward(tiles[:-n_val] or tiles, tiles[-n_val:], cfg.forward,
                          manifest.normalization, seed=cfg.seed)
    path = model.save(_ckpt_dir(args, cfg) / "forward.pt")
    print(f"saved {path} (validation urban MAE {model.val_mae:.4f} °C)")
    return 0


def cmd_train_inverse(args, cfg: RunConfig) -> int:
    from .forward import ForwardModel
    from .tiles import make_splits
    from .training import train_inverse

    manifest = _manifest(args, cfg)
    ckpt_dir = _ckpt_dir(args, cfg)
    fwd_path = ckpt_dir / "forward.pt"
    if not fwd_path.exists():
        raise FileNotFoundError(f"missing forward checkpoint {fwd_path}")
    forward = ForwardModel.load(fwd_path)
    train_split, _ = make_splits(manifest, cfg.split_cutoff)
    train_cfg = dataclasses.replace(cfg.train, seed=cfg.seed)
    model = train_inverse(train_split.load_all(), forward, cfg.denoiser, cfg.edm,
                          cfg.coarsen, cfg.physics, cfg.lambda_schedule, train_cfg,
                          ckpt_dir / f"{args.name}_train", resume_from=args.resume)
    path = model.save(ckpt_dir / f"{args.name}.pt")
    print(f"saved {path} after {model.step} steps")
    return 0


def cmd_generate(args, cfg: RunConfig) -> int:
    from .plots import save_sample_gallery
    from .sampler import EditRequest, generate

    manifest = _manifest(args, cfg)
    forward, inverses, ckpt_dir = _load_models(args, cfg)
    inverse = inverses[sorted(inverses)[0]]
    tile = manifest.load(args.tile)
    roi = _parse_roi(args.roi, tile.shape)
    request = EditRequest(tile_id=args.tile, roi=roi, delta_target=args.delta,
                          gain=args.gain, num_samples=args.n, seed=cfg.seed)
    schedule = (dataclasses.replace(cfg.sweep.sampler, steps=args.steps)
                if args.steps else cfg.sweep.sampler)
    result = generate(tile, request, inverse, forward, schedule=schedule,
                      provenance={"forward_ckpt": "forward.pt",
                                  "inverse_ckpt": f"{sorted(inverses)[0]}.pt",
                                  "config_hash": cfg.config_hash()})

    out = _out_dir(args, cfg) / f"generate_{args.tile}"
    out.mkdir(parents=True, exist_ok=True)
    for j, sample in enumerate(result.samples):
        np.save(out / f"sample_{j:02d}.npy", sample)
    (out / "result.json").write_text(json.dumps({
        "tile_id": args.tile,
        "roi": dataclasses.asdict(roi),
        "delta_target": args.delta,
        "gain": args.gain,
        "delta_pred": [float(d) for d in result.delta_pred],
        "metrics": result.metrics.as_dict(),
        "provenance": result.provenance,
    }, indent=2, sort_keys=True))
    save_sample_gallery(tile.ndvi, result.samples, result.lst_pred, result.delta_pred,
                        out / "gallery.png")
    print(f"wrote {len(result.samples)} samples, result.json and gallery.png to {out}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    from .plots import save_gain_response_figure
    from .sweep import run_sweep

    manifest = _manifest(args, cfg)
    forward, inverses, _ = _load_models(args, cfg)
    spec = dataclasses.replace(cfg.sweep, seed=cfg.seed)
    out = _out_dir(args, cfg) / "evaluate"
    report = run_sweep(spec, inverses, forward, manifest, out)
    save_gain_response_figure(report.by_gain, out / "gain_response.png")
    print(f"wrote {report.raw_path}, {report.summary_path}, {report.best_path} "
          f"and gain_response.png")
    return 0


def cmd_spectra(args, cfg: RunConfig) -> int:
    import csv

    from .metrics import radial_power_spectrum
    from .plots import save_spectra_figure
    from .sampler import EditRequest, generate

    manifest = _manifest(args, cfg)
    forward, inverses, _ = _load_models(args, cfg)
    inverse = inverses[sorted(inverses)[0]]
    tile_ids = list(cfg.sweep.tile_ids) or manifest.tile_ids()

    real_patches, generated_patches = [], []
    for index, tile_id in enumerate(tile_ids):
        tile = manifest.load(tile_id)
        roi = cfg.sweep.roi.validate_within(tile.shape)
        real_patches.append(tile.ndvi[roi.slices()])
        request = EditRequest(tile_id=tile_id, roi=roi, delta_target=0.0, gain=1.0,
                              num_samples=args.n, seed=cfg.seed + index)
        result = generate(tile, request, inverse, forward, schedule=cfg.sweep.sampler)
        generated_patches.extend(s[roi.slices()] for s in result.samples)

    freqs, power_real = radial_power_spectrum(real_patches)
    _, power_generated = radial_power_spectrum(generated_patches)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "spectra.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["freq", "power_real", "power_generated"])
        for row in zip(freqs, power_real, power_generated):
            writer.writerow([repr(float(v)) for v in row])
    save_spectra_figure(freqs, power_real, power_generated, out / "spectra.png")
    print(f"wrote {out / 'spectra.csv'} and spectra.png "
          f"({len(real_patches)} real, {len(generated_patches)} generated patches)")
    return 0


def cmd_ambiguity(args, cfg: RunConfig) -> int:
    from .metrics import ambiguity_binning
    from .plots import save_ambiguity_figure
    from .sweep import write_csv

    manifest = _manifest(args, cfg)
    rows = ambiguity_binning(manifest, min_count=args.min_count)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out / "ambiguity.csv")
    save_ambiguity_figure(rows, out / "ambiguity.png")
    print(f"wrote {len(rows)} populated bins to {out / 'ambiguity.csv'} and ambiguity.png")
    return 0


def cmd_serve(args, cfg: RunConfig) -> int:
    import uvicorn

    from .server import create_app

    port = args.port or int(os.environ.get("THERMOGEN_PORT", "8787"))
    app = create_app(_data_root(args, cfg), _ckpt_dir(args, cfg), cfg,
                     ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=port)
    return 0


_HANDLERS = {
    "synth-data": cmd_synth_data,
    "ingest": cmd_ingest,
    "train-forward": cmd_train_forward,
    "train-inverse": cmd_train_inverse,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "spectra": cmd_spectra,
    "ambiguity": cmd_ambiguity,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _HANDLERS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TileError, ValueError, FileNotFoundError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
