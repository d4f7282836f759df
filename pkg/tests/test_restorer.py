import time

import numpy as np
import pytest

from cube_io import ChannelImage, SpectralCube
from degradation import DegradationConfig, PairSet, bicubic_resize_array, degrade_cube, make_training_pairs
from errors import ModelFormatError, TrainingError, ValidationError
from fourier_core import Kernel
from frc import resolution_from_curve, single_image_frc
from phantoms import synthetic_cube
from psf_model import difference_psf, fit_radial_gaussian
from restorer import (RestorerModel, RestorerTrainer, TrainingConfig, apply_restorer, describe_model,
                      read_model, train_restorer, write_loss_trace, write_model)


@pytest.fixture(scope='module')
def blurred_pairs():
    cube = synthetic_cube(3, 64, seed=21)
    return make_training_pairs(cube, DegradationConfig(scale=2, noise_sigma=0.0, blur_sigma=1.5, seed=21),
                               TrainingConfig(patch_size=16))


def _identity_pairs(rng, count=6, patch=16, scale=2):
    lr = rng.uniform(0.2, 0.8, size=(count, patch, patch))
    hr = np.stack([bicubic_resize_array(p, scale, 'up') for p in lr])
    return PairSet(lr, hr, scale, patch, [(0, 0, 0)] * count)


def test_zero_epochs_returns_delta(blurred_pairs):
    model = train_restorer(blurred_pairs, TrainingConfig(epochs=0, patch_size=16))
    assert np.array_equal(model.kernel.weights, Kernel.delta(9).weights)
    assert model.epoch_losses == []
    assert np.isnan(model.final_loss)


def test_identity_pairs_keep_delta(rng):
    config = TrainingConfig(epochs=5, batch_size=2, patch_size=16, alpha_frc=0.0, beta_pixel=0.1)
    model = train_restorer(_identity_pairs(rng), config)
    assert np.max(np.abs(model.kernel.weights - Kernel.delta(9).weights)) <= 1e-6


def test_training_is_deterministic(blurred_pairs):
    config = TrainingConfig(epochs=3, batch_size=4, patch_size=16, learning_rate=0.01, seed=5)
    first = train_restorer(blurred_pairs, config)
    second = train_restorer(blurred_pairs, config)
    assert np.array_equal(first.kernel.weights, second.kernel.weights)
    assert first.epoch_losses == second.epoch_losses


def test_loss_decreases(blurred_pairs):
    config = TrainingConfig(epochs=20, batch_size=4, patch_size=16, seed=1)
    model = train_restorer(blurred_pairs, config)
    assert len(model.epoch_losses) == 20
    assert model.epoch_losses[-1][0] <= model.epoch_losses[0][0]
    assert model.final_loss == model.epoch_losses[-1][0]


def test_adversarial_schedule():
    trainer = RestorerTrainer(TrainingConfig(epochs=5, patch_size=16, adv_weight=0.5))
    assert trainer.adversarial_weight(0) == 0.0
    assert trainer.adversarial_weight(4) == 0.5
    assert RestorerTrainer(TrainingConfig(patch_size=16)).adversarial_weight(3) == 0.0


def test_adversarial_training_runs(blurred_pairs):
    config = TrainingConfig(epochs=3, batch_size=4, patch_size=16, adv_weight=0.1, seed=2)
    model = train_restorer(blurred_pairs, config)
    assert model.epoch_losses[0][3] == 0.0
    assert model.epoch_losses[-1][3] > 0.0
    assert all(np.isfinite(v) for losses in model.epoch_losses for v in losses)


def test_non_finite_loss_aborts(rng):
    pairs = _identity_pairs(rng)
    hr = pairs.hr.copy()
    hr[0, 0, 0] = np.nan
    broken = PairSet(pairs.lr, hr, pairs.scale, pairs.patch_size, pairs.provenance)
    with pytest.raises(TrainingError):
        train_restorer(broken, TrainingConfig(epochs=1, patch_size=16))


def test_empty_pairs_rejected():
    pairs = PairSet(np.zeros((0, 16, 16)), np.zeros((0, 32, 32)), 2, 16, [])
    with pytest.raises(ValidationError):
        train_restorer(pairs, TrainingConfig(patch_size=16))


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainingConfig(kernel_size=4)
    with pytest.raises(ValidationError):
        TrainingConfig(loss_mode='mse')
    with pytest.raises(ValidationError):
        TrainingConfig(patch_size=8)


def test_delta_model_equals_bicubic_upsample(rng):
    lr = SpectralCube.from_array(rng.uniform(0.3, 0.7, size=(2, 12, 10)), 40.0, [100.0, 200.0])
    model = RestorerModel(2, Kernel.delta(9))
    restored = apply_restorer(model, lr)
    for before, after in zip(lr.channels, restored.channels):
        assert np.array_equal(after.pixels, bicubic_resize_array(before.pixels, 2, 'up'))


def test_apply_restorer_contract(rng):
    lr = SpectralCube.from_array(rng.random((8, 25, 20)), 100.0, 300.0 + np.arange(8))
    model = RestorerModel(4, Kernel.delta(9))
    start = time.perf_counter()
    restored = apply_restorer(model, lr, workers=4)
    assert time.perf_counter() - start < 1.0
    assert (len(restored), restored.height, restored.width) == (8, 100, 80)
    assert restored.pixel_size_um == 25.0
    assert restored.labels == lr.labels
    values = restored.as_array()
    assert values.min() >= 0.0 and values.max() <= 1.0


def test_model_file_round_trip(tmp_path, blurred_pairs):
    model = train_restorer(blurred_pairs, TrainingConfig(epochs=1, batch_size=4, patch_size=16, seed=3))
    path = str(tmp_path / 'model.txt')
    write_model(model, path)
    lines = open(path, encoding='utf-8').read().splitlines()
    assert lines[0] == 'format = hyres-model/1'
    assert lines[2] == 'kernel_size = 9'
    loaded = read_model(path)
    assert loaded.scale == 2 and loaded.seed == 3
    assert np.array_equal(loaded.kernel.weights, model.kernel.weights)
    assert loaded.final_loss == model.final_loss


def test_model_file_errors(tmp_path):
    path = tmp_path / 'model.txt'
    path.write_text('format = other/1\n', encoding='utf-8')
    with pytest.raises(ModelFormatError):
        read_model(str(path))
    path.write_text('format = hyres-model/1\nscale = 2\nkernel_size = 3\nseed = 0\n'
                    'final_loss = 0.5\nkernel = 1,0\n', encoding='utf-8')
    with pytest.raises(ModelFormatError):
        read_model(str(path))
    path.write_text('format = hyres-model/1\nscale = 2\n', encoding='utf-8')
    with pytest.raises(ModelFormatError):
        read_model(str(path))


def test_loss_trace_and_summary(tmp_path, blurred_pairs):
    model = train_restorer(blurred_pairs, TrainingConfig(epochs=2, batch_size=4, patch_size=16))
    path = str(tmp_path / 'loss.csv')
    write_loss_trace(model, path)
    lines = open(path, encoding='utf-8').read().splitlines()
    assert lines[0] == 'epoch,loss_total,loss_frc,loss_pixel,loss_adv'
    assert len(lines) == 3
    assert lines[2].startswith('2,')
    summary = describe_model(model)
    assert summary['kernel_size'] == 9
    assert summary['config']['epochs'] == 2


def test_config_rejects_adam_betas_outside_unit_interval():
    for beta in (-0.1, 1.0, 1.5):
        with pytest.raises(ValidationError, match='adam_beta1'):
            TrainingConfig(adam_beta1=beta)
        with pytest.raises(ValidationError, match='adam_beta2'):
            TrainingConfig(adam_beta2=beta)
    assert TrainingConfig(adam_beta1=0.0).adam_beta1 == 0.0


@pytest.mark.slow
@pytest.mark.parametrize('seed', [13, 14, 15])
def test_training_learns_deblurring(seed):
    cube = synthetic_cube(1, 256, seed=seed)
    dcfg = DegradationConfig(scale=4, noise_sigma=0.0, blur_sigma=1.5, seed=seed)
    tcfg = TrainingConfig(epochs=200, batch_size=8, patch_size=16, learning_rate=0.01, seed=seed)
    model = train_restorer(make_training_pairs(cube, dcfg, tcfg), tcfg)
    assert model.epoch_losses[-1][0] <= model.epoch_losses[0][0]

    _, lr = degrade_cube(cube, dcfg)
    upsampled = ChannelImage(bicubic_resize_array(lr.channels[0].pixels, 4, 'up'))
    restored = apply_restorer(model, lr).channels[0]
    fit = fit_radial_gaussian(difference_psf(upsampled, restored))
    assert fit.fwhm >= 1.0

    # 复原结果的单图像FRC分辨率不差于双三次上采样
    restored_resolution = resolution_from_curve(single_image_frc(restored)).resolution_um
    upsampled_resolution = resolution_from_curve(single_image_frc(upsampled)).resolution_um
    assert restored_resolution <= upsampled_resolution * (1.0 + 1e-9)


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(10))
def test_loss_trace_does_not_increase(seed):
    cube = synthetic_cube(2, 64, seed=100 + seed)
    dcfg = DegradationConfig(scale=2, noise_sigma=0.0, blur_sigma=1.5, seed=seed)
    tcfg = TrainingConfig(epochs=30, batch_size=4, patch_size=16, seed=seed)
    model = train_restorer(make_training_pairs(cube, dcfg, tcfg), tcfg)
    assert model.epoch_losses[-1][0] <= model.epoch_losses[0][0]
