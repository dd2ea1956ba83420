import math

import numpy as np
import pytest
import torch
from torch import nn

from thermogen.forward import (
    DeltaTNet,
    ForwardModel,
    ForwardModelConfig,
    t_base,
    train_forward,
    urban_weighted_mse,
)
from thermogen.tiles import NormalizationSpec, SyntheticWorldConfig, Tile, generate_synthetic_tile


def make_tile(lst, ndvi=None, bh=None):
    lst = np.asarray(lst, dtype=np.float32)
    shape = lst.shape
    return Tile(
        ndvi=np.zeros(shape, np.float32) if ndvi is None else ndvi,
        lst=lst,
        bh=np.zeros(shape, np.float32) if bh is None else bh,
        city_id="c", acquisition_date="2020-01-01", tile_id="t",
    )


class TestTBase:
    def test_constant(self):
        assert t_base(make_tile(np.full((16, 16), 25.0))) == pytest.approx(25.0)

    def test_half_and_half(self):
        lst = np.concatenate([np.full((8, 16), 20.0), np.full((8, 16), 30.0)])
        assert t_base(make_tile(lst)) == pytest.approx(25.0)

    def test_matches_fsum_oracle(self):
        rng = np.random.default_rng(1)
        lst = rng.normal(22.0, 5.0, (32, 32)).astype(np.float32)
        oracle = math.fsum(lst.ravel().tolist()) / lst.size
        assert t_base(make_tile(lst)) == pytest.approx(oracle, rel=1e-6)


class TestUrbanWeightedMse:
    def test_zero_when_equal(self):
        x = torch.randn(2, 1, 8, 8)
        bh = torch.rand(2, 1, 8, 8)
        assert urban_weighted_mse(x, x, bh, 5.0).item() == 0.0

    def test_collapses_to_plain_mse_without_buildings(self):
        pred = torch.randn(1, 1, 8, 8, dtype=torch.float64)
        gt = torch.randn(1, 1, 8, 8, dtype=torch.float64)
        bh = torch.zeros_like(pred)
        got = urban_weighted_mse(pred, gt, bh, 5.0).item()
        assert got == pytest.approx(((pred - gt) ** 2).mean().item(), rel=1e-12)

    def test_two_pixel_hand_example(self):
        # errors {1, 2}, bh {0, 5}, w=5 -> (1*1 + 5*4) / (1+5) = 3.5
        pred = torch.tensor([[1.0, 2.0]])
        gt = torch.zeros(1, 2)
        bh = torch.tensor([[0.0, 5.0]])
        assert urban_weighted_mse(pred, gt, bh, 5.0).item() == pytest.approx(3.5)

    def test_unit_weight_equals_mse_to_1e12(self):
        rng = torch.Generator().manual_seed(0)
        pred = torch.randn(1, 1, 6, 6, generator=rng, dtype=torch.float64)
        gt = torch.randn(1, 1, 6, 6, generator=rng, dtype=torch.float64)
        bh = torch.rand(1, 1, 6, 6, generator=rng, dtype=torch.float64)
        got = urban_weighted_mse(pred, gt, bh, 1.0).item()
        assert abs(got - ((pred - gt) ** 2).mean().item()) < 1e-12

    def test_invariant_under_joint_pixel_permutation(self):
        rng = torch.Generator().manual_seed(3)
        pred = torch.randn(36, generator=rng, dtype=torch.float64)
        gt = torch.randn(36, generator=rng, dtype=torch.float64)
        bh = (torch.rand(36, generator=rng, dtype=torch.float64) > 0.5).double()
        perm = torch.randperm(36, generator=rng)
        a = urban_weighted_mse(pred, gt, bh, 5.0).item()
        b = urban_weighted_mse(pred[perm], gt[perm], bh[perm], 5.0).item()
        assert a == pytest.approx(b, rel=1e-12)

    def test_nonnegative_and_zero_iff_equal(self):
        pred = torch.tensor([[0.0, 1e-8]])
        gt = torch.zeros(1, 2)
        bh = torch.zeros(1, 2)
        assert urban_weighted_mse(pred, gt, bh, 2.0).item() > 0.0


@pytest.fixture(scope="module")
def norm_spec():
    return NormalizationSpec(lst_center=24.0, lst_scale=5.0, bh_scale=60.0)


class TestForwardPredict:
    def test_untrained_model_predicts_t_base_everywhere(self, norm_spec):
        net = DeltaTNet(base_channels=8, depth=2)
        model = ForwardModel(net, ForwardModelConfig(base_channels=8, encoder_depth=2),
                             norm_spec).freeze()
        ndvi = np.random.default_rng(0).uniform(-1, 1, (32, 32)).astype(np.float32)
        bh = np.zeros((32, 32), np.float32)
        lst = model.predict(ndvi, bh, t_base=23.0)
        np.testing.assert_array_equal(lst, np.full((32, 32), 23.0, np.float32))

    def test_eval_mode_is_deterministic(self, norm_spec):
        torch.manual_seed(0)
        net = DeltaTNet(base_channels=8, depth=2)
        # Give the head nonzero weights so the output is nontrivial.
        nn.init.normal_(net.head.weight, std=0.1)
        model = ForwardModel(net, ForwardModelConfig(base_channels=8, encoder_depth=2),
                             norm_spec).freeze()
        rng = np.random.default_rng(1)
        ndvi = rng.uniform(-1, 1, (32, 32)).astype(np.float32)
        bh = rng.uniform(0, 30, (32, 32)).astype(np.float32)
        a = model.predict(ndvi, bh, 20.0)
        b = model.predict(ndvi, bh, 20.0)
        np.testing.assert_array_equal(a, b)

    def test_shape_mismatch_is_error(self, norm_spec):
        net = DeltaTNet(base_channels=8, depth=2)
        model = ForwardModel(net, ForwardModelConfig(base_channels=8, encoder_depth=2),
                             norm_spec).freeze()
        with pytest.raises(ValueError, match="shape mismatch"):
            model.predict(np.zeros((16, 16), np.float32), np.zeros((16, 8), np.float32), 20.0)


class TestGradientOracle:
    def test_input_gradient_matches_central_differences(self, norm_spec):
        # 2-layer toy network in float64 so finite differences are clean.
        torch.manual_seed(0)
        toy = nn.Sequential(
            nn.Conv2d(2, 4, 3, padding=1), nn.Tanh(), nn.Conv2d(4, 1, 3, padding=1),
        ).double()
        model = ForwardModel(toy, ForwardModelConfig(), norm_spec).freeze()
        gen = torch.Generator().manual_seed(1)
        ndvi = torch.randn(1, 1, 8, 8, generator=gen, dtype=torch.float64, requires_grad=True)
        bh = torch.rand(1, 1, 8, 8, generator=gen, dtype=torch.float64)

        out = model.delta_celsius(ndvi, bh).sum()
        out.backward()
        analytic = ndvi.grad.clone()

        h = 1e-4
        fd = torch.zeros_like(analytic)
        with torch.no_grad():
            for i in range(8):
                for j in range(8):
                    bumped = ndvi.detach().clone()
                    bumped[0, 0, i, j] += h
                    up = model.delta_celsius(bumped, bh).sum()
                    bumped[0, 0, i, j] -= 2 * h
                    down = model.delta_celsius(bumped, bh).sum()
                    fd[0, 0, i, j] = (up - down) / (2 * h)
        scale = fd.abs().max().item()
        rel = ((analytic - fd).abs() / (fd.abs() + 1e-8 * scale)).max().item()
        assert rel < 1e-3


def _world_tiles(n, size=16, seed=0, noise=0.2):
    cfg = SyntheticWorldConfig(size=size, seed=seed, noise_std=noise,
                               alpha=6.0, beta=5.0, blur_radius_px=1)
    return [generate_synthetic_tile(cfg, k) for k in range(n)], cfg


class TestTraining:
    def test_smoke_one_epoch(self, norm_spec):
        tiles, _ = _world_tiles(4)
        cfg = ForwardModelConfig(base_channels=8, encoder_depth=2, epochs=1, batch_size=2)
        model = train_forward(tiles, tiles, cfg, norm_spec, seed=0)
        assert model.frozen
        assert math.isfinite(model.val_mae)

    def test_selected_checkpoint_no_worse_than_first_epoch(self, norm_spec):
        tiles, _ = _world_tiles(24)
        cfg = ForwardModelConfig(base_channels=8, encoder_depth=2, epochs=4, batch_size=8)
        model = train_forward(tiles[:16], tiles[16:], cfg, norm_spec, seed=0)
        assert model.val_mae <= model.val_mae_history[1] + 1e-12
        assert model.val_mae == pytest.approx(min(model.val_mae_history))

    def test_no_urban_pixels_falls_back_to_all_pixel_mae(self, norm_spec):
        cfg_world = SyntheticWorldConfig(size=16, bh_block_density=0.0, noise_std=0.1)
        tiles = [generate_synthetic_tile(cfg_world, k) for k in range(6)]
        assert all((t.bh == 0).all() for t in tiles)
        cfg = ForwardModelConfig(base_channels=8, encoder_depth=2, epochs=1, batch_size=4)
        model = train_forward(tiles[:4], tiles[4:], cfg, norm_spec, seed=0)
        assert math.isfinite(model.val_mae)

    def test_training_learns_the_synthetic_coupling(self, norm_spec):
        tiles, _ = _world_tiles(48, size=16, noise=0.1)
        cfg = ForwardModelConfig(base_channels=8, encoder_depth=2, epochs=6,
                                 batch_size=8, learning_rate=1e-3)
        model = train_forward(tiles[:40], tiles[40:], cfg, norm_spec, seed=0)
        assert model.val_mae < model.val_mae_history[0] * 0.8

    def test_toy_world_mae_bound(self, norm_spec):
        # 500 train / 100 held-out tiles at noise_std 0.25 °C; the trained
        # model must come within 0.5 °C per-pixel on urban pixels. Slowest
        # test in this module (~1 min on one core).
        world = SyntheticWorldConfig(size=16, noise_std=0.25, seed=11)
        tiles = [generate_synthetic_tile(world, k) for k in range(600)]
        cfg = ForwardModelConfig(base_channels=24, encoder_depth=2, epochs=15,
                                 learning_rate=1e-3)
        model = train_forward(tiles[:500], tiles[500:], cfg, norm_spec, seed=0)
        assert model.val_mae <= 0.5

    def test_empty_dataset_rejected(self, norm_spec):
        tiles, _ = _world_tiles(2)
        cfg = ForwardModelConfig(epochs=1)
        with pytest.raises(ValueError, match="non-empty"):
            train_forward([], tiles, cfg, norm_spec)


class TestSerialization:
    def test_round_trip_bit_identical_outputs(self, tmp_path, norm_spec):
        tiles, _ = _world_tiles(6)
        cfg = ForwardModelConfig(base_channels=8, encoder_depth=2, epochs=1, batch_size=4)
        model = train_forward(tiles[:4], tiles[4:], cfg, norm_spec, seed=0)
        path = model.save(tmp_path / "fwd.pt")
        loaded = ForwardModel.load(path)
        tile = tiles[0]
        a = model.predict(tile.ndvi, tile.bh, tile.t_base())
        b = loaded.predict(tile.ndvi, tile.bh, tile.t_base())
        np.testing.assert_array_equal(a, b)
        assert (tmp_path / "fwd.json").exists()
        assert loaded.frozen
