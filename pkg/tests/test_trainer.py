import numpy as np
import pytest

from sctr.errors import NumericalError
from sctr.synthetic import piecewise_rank1
from sctr.tensor import tucker_compose
from sctr.trainer import (TrainConfig, assemble, granularity_superpixels, make_mask, sweep_csv,
                          sweep_granularity, train_ablation, train_sctr)

TINY = dict(width=16, residual_blocks=1, iterations=30, k_target=4, force=True)


def test_mask_examples():
    assert make_mask((3, 4, 5), 1.0, 0).all()
    m = make_mask((100, 100, 10), 0.1, 0)
    assert m.sum() == 10000
    assert np.array_equal(make_mask((20, 20, 4), 0.3, 5), make_mask((20, 20, 4), 0.3, 5))
    assert not np.array_equal(make_mask((20, 20, 4), 0.3, 5), make_mask((20, 20, 4), 0.3, 6))
    with pytest.raises(ValueError):
        make_mask((3, 3, 3), 0.0)


def test_config_ranges_and_force():
    TrainConfig().validate()
    for bad in (dict(lr_base=1e-2), dict(weight_decay=0.1), dict(omega0=7.0), dict(downsample=(2, 1, 1))):
        with pytest.raises(ValueError):
            TrainConfig(**bad).validate()
        TrainConfig(force=True, **bad).validate()
    with pytest.raises(ValueError):
        TrainConfig(sampling_rate=0.0, force=True).validate()


def test_config_dict_round_trip():
    cfg = TrainConfig(seed=4, downsample=(1, 2, 1), fixed_ranks=(2, 2, 1))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"bogus": 1})


def test_constant_fully_observed_fits():
    x = np.full((24, 24, 4), 0.6)
    cfg = TrainConfig(iterations=200, k_target=4, reimpose_observed=False)
    res = train_sctr(x, np.ones(x.shape, bool), cfg)
    assert res.metrics.psnr_db > 40


def test_run_result_contract():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(20, 18, 3))
    mask = make_mask(x.shape, 0.4, 0)
    res = train_sctr(x, mask, TrainConfig(**TINY))
    assert res.reconstruction.shape == x.shape
    assert np.array_equal(res.reconstruction[mask], x[mask])
    assert len(res.loss_curve) == 30
    assert res.loss_curve[-1] < res.loss_curve[0]
    assert res.config_echo.iterations == 30
    assert res.wall_time_s > 0
    assert res.loss_curve_csv().startswith("iteration,loss\n")


def test_no_superpixel_single_patch():
    x = np.random.default_rng(1).uniform(size=(16, 16, 3))
    res = train_ablation(x, make_mask(x.shape, 0.5, 1), TrainConfig(**TINY), "no_superpixel")
    assert res.patch_count == 1
    assert res.patches[0].spec.bbox == (0, 16, 0, 16)


def test_unknown_variant():
    with pytest.raises(ValueError):
        train_ablation(np.zeros((4, 4, 2)), np.ones((4, 4, 2), bool), TrainConfig(**TINY), "half")


def test_loss_ignores_unobserved_values():
    rng = np.random.default_rng(2)
    x = rng.uniform(size=(16, 16, 3))
    mask = make_mask(x.shape, 0.3, 2)
    y = np.where(mask, x, rng.uniform(size=x.shape) * 50)
    a = train_sctr(x, mask, TrainConfig(**TINY))
    b = train_sctr(y, mask, TrainConfig(**TINY))
    assert a.loss_curve == b.loss_curve


def test_divergence_reports_iteration():
    x = np.random.default_rng(3).uniform(size=(16, 16, 2))
    cfg = TrainConfig(**{**TINY, "lr_base": 1e300, "weight_decay": 0.0})
    with pytest.raises(NumericalError) as exc:
        with np.errstate(all="ignore"):
            train_sctr(x, make_mask(x.shape, 0.5, 0), cfg)
    assert exc.value.iteration is not None


def test_assemble_rejects_overlap():
    x = np.random.default_rng(4).uniform(size=(12, 12, 2))
    res = train_ablation(x, np.ones(x.shape, bool), TrainConfig(**{**TINY, "iterations": 2}), "no_superpixel")
    outputs = {p.label: np.zeros(p.spec.dims) for p in res.patches}
    with pytest.raises(RuntimeError):
        assemble(res.patches + res.patches, outputs, x.shape)


def _orthonormal_profiles(n, rng):
    t = np.linspace(0, 1, n)
    f = np.stack([np.cos(np.pi * t * rng.uniform(0.5, 1.5)),
                  np.sin(np.pi * t * rng.uniform(0.5, 1.5) + rng.uniform())], axis=1)
    return np.linalg.qr(f)[0]


@pytest.mark.parametrize("seed", [0, 1])
def test_neither_recovers_true_rank_tucker(seed):
    rng = np.random.default_rng(seed)
    x = tucker_compose(rng.normal(size=(2, 2, 2)), _orthonormal_profiles(32, rng),
                       _orthonormal_profiles(32, rng), _orthonormal_profiles(6, rng))
    mask = make_mask(x.shape, 0.5, seed)
    cfg = TrainConfig(iterations=3000, lr_base=5e-3, fixed_ranks=(2, 2, 2), reimpose_observed=False, seed=seed)
    res = train_ablation(x, mask, cfg, "neither")
    assert np.linalg.norm(res.reconstruction - x) / np.linalg.norm(x) < 1e-2


def test_granularity_mapping():
    assert granularity_superpixels(0) == 8
    assert granularity_superpixels(2.0) == 32
    assert granularity_superpixels(3.0) == 64


def test_sweep_single_alpha():
    x = np.random.default_rng(5).uniform(size=(24, 24, 2))
    rows = sweep_granularity(x, make_mask(x.shape, 0.5, 0), TrainConfig(**{**TINY, "iterations": 3}), [0])
    assert len(rows) == 1 and rows[0]["n_superpixels"] == 8
    assert sweep_csv(rows).splitlines()[0] == "alpha,n_superpixels,patches,psnr,ssim"
    with pytest.raises(ValueError):
        sweep_granularity(x, make_mask(x.shape, 0.5, 0), TrainConfig(**TINY), [])


def test_single_thread_runs_bit_identical():
    x = np.random.default_rng(6).uniform(size=(16, 16, 3))
    mask = make_mask(x.shape, 0.4, 1)
    a = train_sctr(x, mask, TrainConfig(**TINY))
    b = train_sctr(x, mask, TrainConfig(**TINY))
    assert np.array_equal(a.reconstruction, b.reconstruction)
    assert a.loss_curve == b.loss_curve


@pytest.mark.slow
def test_superpixels_beat_single_patch_at_defaults():
    x, _ = piecewise_rank1()
    mask = make_mask(x.shape, 0.2, 0)
    cfg = TrainConfig()
    full = train_ablation(x, mask, cfg, "full")
    single = train_ablation(x, mask, cfg, "no_superpixel", guide=full.guide)
    print(f"full={full.metrics.psnr_db:.2f} dB no_superpixel={single.metrics.psnr_db:.2f} dB")
    assert full.metrics.psnr_db - single.metrics.psnr_db >= 2.0
