import math

import numpy as np
import pytest

from cube_io import ChannelImage, SpectralCube
from degradation import (DegradationConfig, PairSet, add_gaussian_noise, bicubic_resize,
                         bicubic_resize_array, crop_to_multiple, cubic_weight, degrade_cube,
                         filter_low_snr, make_training_pairs, mse_signal)
from errors import EmptyCubeError, ValidationError
from phantoms import synthetic_cube
from restorer import TrainingConfig


def _cube(planes, pixel_size_um=10.0):
    planes = [np.asarray(p, dtype=np.float64) for p in planes]
    return SpectralCube(planes, pixel_size_um, 100.0 + np.arange(len(planes)))


def test_mse_signal_examples():
    assert mse_signal(ChannelImage(np.zeros((3, 3)))) == 0.0
    assert mse_signal(ChannelImage(np.ones((2, 2)))) == 1.0
    assert mse_signal(ChannelImage([[3.0, 4.0], [0.0, 0.0]])) == 6.25


def test_filter_removes_empty_channel():
    cube = _cube([np.zeros((4, 4)), np.full((4, 4), 0.5)])
    filtered, mask = filter_low_snr(cube, 1e-9)
    assert mask.tolist() == [False, True]
    assert filtered.labels == (101.0,)


def test_filter_with_zero_threshold_keeps_all():
    cube = _cube([np.zeros((4, 4)), np.full((4, 4), 0.5)])
    filtered, _ = filter_low_snr(cube, 0.0)
    assert len(filtered) == 2


def test_filter_by_threshold():
    cube = _cube([np.full((4, 4), math.sqrt(0.1)), np.full((4, 4), math.sqrt(0.5))])
    filtered, mask = filter_low_snr(cube, 0.3)
    assert mask.tolist() == [False, True]
    assert len(filtered) == 1


def test_filter_everything_is_error():
    with pytest.raises(EmptyCubeError):
        filter_low_snr(_cube([np.zeros((4, 4))]), 1e-9)


def test_crop_to_multiple():
    cube = _cube([np.ones((103, 98))])
    cropped = crop_to_multiple(cube, 4)
    assert (cropped.height, cropped.width) == (100, 96)
    even = _cube([np.ones((8, 12))])
    assert crop_to_multiple(even, 4) is even
    with pytest.raises(ValidationError):
        crop_to_multiple(_cube([np.ones((3, 3))]), 4)


def test_cubic_weight_values():
    assert cubic_weight(0.0) == 1.0
    assert cubic_weight(1.0) == 0.0
    assert cubic_weight(2.0) == 0.0
    # 任意相位下四个抽头权重之和为1
    for frac in np.linspace(0, 1, 11):
        assert sum(cubic_weight(frac - t) for t in range(-1, 3)) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize('scale', [2, 3, 4])
@pytest.mark.parametrize('direction', ['down', 'up'])
def test_constant_is_preserved(scale, direction):
    out = bicubic_resize(ChannelImage(np.full((12, 24), 0.7)), scale, direction)
    assert np.max(np.abs(out.pixels - 0.7)) < 1e-12


def test_constant_survives_down_up_down():
    pixels = np.full((16, 16), 0.7)
    out = bicubic_resize_array(bicubic_resize_array(bicubic_resize_array(pixels, 2, 'down'), 2, 'up'), 2, 'down')
    assert np.max(np.abs(out - 0.7)) < 1e-12


def test_impulse_downsample_matches_direct_oracle():
    pixels = np.zeros((8, 8))
    pixels[4, 4] = 1.0
    out = bicubic_resize_array(pixels, 2, 'down')
    expected = np.zeros((4, 4))
    for o1 in range(4):
        for o2 in range(4):
            c1 = (o1 + 0.5) * 2 - 0.5
            c2 = (o2 + 0.5) * 2 - 0.5
            total = 0.0
            for t1 in range(-1, 3):
                for t2 in range(-1, 3):
                    i = min(max(int(math.floor(c1)) + t1, 0), 7)
                    j = min(max(int(math.floor(c2)) + t2, 0), 7)
                    total += cubic_weight(c1 - math.floor(c1) - t1) * cubic_weight(c2 - math.floor(c2) - t2) * pixels[i, j]
            expected[o1, o2] = total
    assert np.max(np.abs(out - expected)) < 1e-12


def test_resize_dimensions():
    assert bicubic_resize_array(np.zeros((25, 20)), 4, 'up').shape == (100, 80)
    assert bicubic_resize_array(np.zeros((100, 80)), 4, 'down').shape == (25, 20)
    with pytest.raises(ValidationError):
        bicubic_resize_array(np.zeros((10, 8)), 4, 'down')
    with pytest.raises(ValidationError):
        bicubic_resize_array(np.zeros((8, 8)), 2, 'sideways')


def test_noise_zero_sigma_is_identity():
    image = ChannelImage(np.full((8, 8), 0.3))
    assert add_gaussian_noise(image, 0.0, seed=1) is image


def test_noise_is_deterministic():
    image = ChannelImage(np.full((32, 32), 0.5))
    a = add_gaussian_noise(image, 0.05, seed=9, stream=3)
    b = add_gaussian_noise(image, 0.05, seed=9, stream=3)
    assert np.array_equal(a.pixels, b.pixels)


def test_noise_moments():
    image = ChannelImage(np.full((1000, 1000), 0.5))
    out = add_gaussian_noise(image, 0.05, seed=0).pixels
    assert abs(out.std() - 0.05) < 0.01 * 0.05


def test_noise_background_rule():
    pixels = np.full((16, 16), 0.5)
    pixels[:8] = 0.0
    image = ChannelImage(pixels)
    kept = add_gaussian_noise(image, 0.1, seed=2).pixels
    assert np.all(kept[:8] == 0.0)
    noisy = add_gaussian_noise(image, 0.1, seed=2, include_background=True).pixels
    assert np.any(noisy[:8] > 0.0)
    assert noisy.min() >= 0.0 and noisy.max() <= 1.0


def test_config_validation():
    with pytest.raises(ValidationError):
        DegradationConfig(scale=1)
    with pytest.raises(ValidationError):
        DegradationConfig(noisy_fraction=1.5)
    with pytest.raises(ValidationError):
        DegradationConfig(noise_sigma=-0.1)


def test_degrade_cube_contract():
    cube = synthetic_cube(3, 66, 70, seed=1, pixel_size_um=25.0)
    hr, lr = degrade_cube(cube, DegradationConfig(scale=4, noise_sigma=0.02, seed=5))
    assert (hr.height, hr.width) == (64, 68)
    assert (lr.height, lr.width) == (16, 17)
    assert lr.pixel_size_um == 100.0
    assert lr.labels == cube.labels


def test_degrade_cube_is_deterministic():
    cube = synthetic_cube(3, 32, seed=1)
    config = DegradationConfig(scale=2, noise_sigma=0.05, noisy_fraction=0.5, seed=11)
    _, first = degrade_cube(cube, config)
    _, second = degrade_cube(cube, config)
    assert np.array_equal(first.as_array(), second.as_array())


def test_patch_sizes_follow_scale():
    cube = synthetic_cube(1, 400, seed=2)
    pairs = make_training_pairs(cube, DegradationConfig(scale=4, noise_sigma=0.0), TrainingConfig(patch_size=50))
    assert pairs.lr.shape[1:] == (50, 50)
    assert pairs.hr.shape[1:] == (200, 200)
    # 100x100 的LR通道需要 ⌈10000/2500⌉ 个图块
    assert len(pairs) == 4


@pytest.mark.parametrize('scale', [2, 3, 4])
def test_noiseless_pairs_are_exact_downsamples(scale):
    cube = synthetic_cube(2, 128, seed=3)
    pairs = make_training_pairs(cube, DegradationConfig(scale=scale, noise_sigma=0.0, seed=4),
                                TrainingConfig(patch_size=16))
    assert len(pairs) > 0
    for lr, hr in zip(pairs.lr, pairs.hr):
        assert np.array_equal(lr, bicubic_resize_array(hr, scale, 'down'))


def test_noisy_pairs_differ_by_patch():
    cube = synthetic_cube(1, 64, seed=3)
    pairs = make_training_pairs(cube, DegradationConfig(scale=2, noise_sigma=0.05, noisy_fraction=1.0, seed=4),
                                TrainingConfig(patch_size=16))
    residuals = [lr - bicubic_resize_array(hr, 2, 'down') for lr, hr in zip(pairs.lr, pairs.hr)]
    assert np.std(residuals[0]) > 0.01
    assert not np.array_equal(residuals[0], residuals[1])


def test_pairs_are_deterministic():
    cube = synthetic_cube(2, 96, seed=3)
    dcfg = DegradationConfig(scale=2, noise_sigma=0.02, seed=8)
    tcfg = TrainingConfig(patch_size=16)
    first = make_training_pairs(cube, dcfg, tcfg)
    second = make_training_pairs(cube, dcfg, tcfg)
    assert first.provenance == second.provenance
    assert np.array_equal(first.lr, second.lr)
    assert np.array_equal(first.hr, second.hr)


def test_pairs_need_room_for_a_patch():
    with pytest.raises(ValidationError):
        make_training_pairs(synthetic_cube(1, 32, seed=1), DegradationConfig(scale=4), TrainingConfig(patch_size=16))


def test_pair_set_shape_check():
    with pytest.raises(ValidationError):
        PairSet(np.zeros((2, 16, 16)), np.zeros((2, 30, 30)), 2, 16, [])
