import numpy as np
import pytest

from cube_io import ChannelImage, SpectralCube
from errors import UndefinedCurveError, ValidationError
from fourier_core import convolve_periodic_array, gaussian_kernel, ring_partition
from frc import (DEFAULT_THRESHOLD, FrcCurve, evaluate_cube_resolution, frc_curve, frc_loss,
                 frc_loss_array, frc_loss_gradient, frc_loss_gradient_array, resolution_from_curve,
                 single_image_frc, split_diagonal, write_curve_csv)
from noise import gaussian_field
from phantoms import checkerboard, white_noise_phantom


def _blurred_noise(sigma_blur, sigma_noise, size=256, seed=3, noise_stream=0):
    clean = convolve_periodic_array(white_noise_phantom(size, seed=seed).pixels, gaussian_kernel(sigma_blur))
    return clean + gaussian_field(clean.shape, sigma_noise, seed, 100 + noise_stream)


def test_self_correlation_is_one(rng):
    a = ChannelImage(rng.random((32, 32)))
    curve = frc_curve(a, a)
    assert len(curve) == 16
    assert np.all(curve.defined)
    assert np.max(np.abs(curve.values - 1.0)) < 1e-12


def test_anti_correlation_is_minus_one(rng):
    pixels = rng.random((32, 32))
    curve = frc_curve(ChannelImage(pixels), ChannelImage(-pixels))
    assert np.max(np.abs(curve.values[curve.defined] + 1.0)) < 1e-12


def test_frc_is_symmetric(rng):
    for _ in range(20):
        a = ChannelImage(rng.random((32, 24)))
        b = ChannelImage(rng.random((32, 24)))
        forward, backward = frc_curve(a, b), frc_curve(b, a)
        assert np.array_equal(forward.defined, backward.defined)
        assert np.array_equal(forward.values[forward.defined], backward.values[backward.defined])


@pytest.mark.parametrize('factor', [1e-3, 0.5, 3.7, 1e4])
def test_frc_is_scale_invariant(rng, factor):
    a = rng.random((32, 32))
    b = rng.random((32, 32))
    base = frc_curve(ChannelImage(a), ChannelImage(b))
    scaled = frc_curve(ChannelImage(factor * a), ChannelImage(b))
    assert np.max(np.abs(scaled.values - base.values)) <= 1e-12
    assert frc_loss(ChannelImage(factor * a), ChannelImage(b)) == pytest.approx(
        frc_loss(ChannelImage(a), ChannelImage(b)), abs=1e-12)


def test_periodic_shift_only_rotates_phases(rng):
    a = rng.random((32, 32))
    b = rng.random((32, 32))
    shifted = np.roll(a, (3, -5), axis=(0, 1))

    # 同时平移两幅图像，曲线不变
    both = frc_curve(ChannelImage(shifted), ChannelImage(np.roll(b, (3, -5), axis=(0, 1))))
    assert np.max(np.abs(both.values - frc_curve(ChannelImage(a), ChannelImage(b)).values)) <= 1e-12

    # 只平移一幅：互谱的模与能量之比仍为1
    curve = frc_curve(ChannelImage(shifted), ChannelImage(a))
    fa, fb = np.fft.fft2(shifted), np.fft.fft2(a)
    partition = ring_partition(32, 32)
    cross = fa * np.conj(fb)
    magnitude = np.hypot(partition.ring_sums(cross.real), partition.ring_sums(cross.imag))
    energy = np.sqrt(partition.ring_sums(np.abs(fa) ** 2) * partition.ring_sums(np.abs(fb) ** 2))
    coherence = (magnitude / energy)[1:]
    assert np.max(np.abs(coherence[curve.defined] - 1.0)) <= 1e-12
    assert np.all(np.abs(curve.values[curve.defined]) <= 1.0 + 1e-12)


def test_independent_noise_bound(rng):
    within = total = 0
    for _ in range(200):
        a = ChannelImage(rng.standard_normal((64, 64)))
        b = ChannelImage(rng.standard_normal((64, 64)))
        curve = frc_curve(a, b)
        bound = 3.0 / np.sqrt(curve.counts)
        within += int(np.count_nonzero(np.abs(curve.values) <= bound))
        total += len(curve)
    assert within >= 0.99 * total


def test_frequencies_and_pixel_size(rng):
    curve = frc_curve(ChannelImage(rng.random((16, 20))), ChannelImage(rng.random((16, 20))), pixel_size_um=5.0)
    assert curve.rings.tolist() == list(range(1, 9))
    assert np.allclose(curve.frequencies, np.arange(1, 9) / 16.0)
    assert curve.effective_pixel_size_um == 5.0


def test_frc_rejects_shape_mismatch_and_zero_input(rng):
    with pytest.raises(ValidationError):
        frc_curve(ChannelImage(rng.random((8, 8))), ChannelImage(rng.random((8, 10))))
    with pytest.raises(ValidationError):
        frc_curve(ChannelImage(np.zeros((8, 8))), ChannelImage(rng.random((8, 8))))


def test_split_diagonal():
    pixels = np.arange(36.0).reshape(6, 6)
    a, b = split_diagonal(pixels)
    assert a.tolist() == pixels[0::2, 0::2].tolist()
    assert b.tolist() == pixels[1::2, 1::2].tolist()


def test_single_image_frc_constant_is_undefined():
    with pytest.raises(UndefinedCurveError):
        single_image_frc(ChannelImage(np.full((32, 32), 0.4)))
    with pytest.raises(UndefinedCurveError):
        single_image_frc(ChannelImage(np.zeros((32, 32))))


def test_single_image_frc_too_small():
    with pytest.raises(ValidationError):
        single_image_frc(ChannelImage(np.ones((6, 32))))


def test_single_image_frc_checkerboard():
    curve = single_image_frc(checkerboard(32, block=4, low=0.2, high=0.8), pixel_size_um=10.0)
    assert curve.effective_pixel_size_um == 20.0
    assert np.any(curve.defined)
    assert np.max(np.abs(curve.values[curve.defined] - 1.0)) < 1e-12


def test_resolution_increases_with_blur():
    resolutions = []
    for sigma in (1.0, 2.0, 4.0):
        curve = single_image_frc(ChannelImage(_blurred_noise(sigma, 0.2)), pixel_size_um=1.0)
        resolutions.append(resolution_from_curve(curve).resolution_um)
    assert resolutions[0] < resolutions[1] < resolutions[2]


def test_single_image_agrees_with_two_realization_oracle():
    noisy = _blurred_noise(4.0, 0.026, noise_stream=0)
    single = resolution_from_curve(single_image_frc(ChannelImage(noisy)))

    second = _blurred_noise(4.0, 0.026, noise_stream=1)
    oracle = resolution_from_curve(frc_curve(ChannelImage(noisy), ChannelImage(second)))
    assert not single.nyquist_limited
    assert abs(single.resolution_um - oracle.resolution_um) <= 0.2 * oracle.resolution_um


@pytest.mark.slow
def test_single_image_agrees_with_oracle_at_moderate_blur():
    noisy = _blurred_noise(2.0, 0.52, size=1024, noise_stream=0)
    single = resolution_from_curve(single_image_frc(ChannelImage(noisy)))

    second = _blurred_noise(2.0, 0.52, size=1024, noise_stream=1)
    oracle = resolution_from_curve(frc_curve(ChannelImage(noisy), ChannelImage(second)))
    assert not single.nyquist_limited
    assert abs(single.resolution_um - oracle.resolution_um) <= 0.2 * oracle.resolution_um


def _synthetic_curve(values, pixel_size_um=10.0, decimation=1):
    rings = np.arange(1, len(values) + 1)
    return FrcCurve(rings, rings / (2.0 * len(values)), values, np.ones(len(values), dtype=bool),
                    np.ones(len(values), dtype=np.int64), pixel_size_um, decimation)


def test_no_crossing_is_nyquist_limited():
    estimate = resolution_from_curve(_synthetic_curve(np.ones(10), pixel_size_um=5.0, decimation=2))
    assert estimate.nyquist_limited
    assert estimate.resolution_um == 20.0


def test_step_curve_is_interpolated():
    # 频率 r/20：f ≤ 0.2 为1，之后为0
    values = np.where(np.arange(1, 11) / 20.0 <= 0.2, 1.0, 0.0)
    estimate = resolution_from_curve(_synthetic_curve(values), DEFAULT_THRESHOLD)
    expected_crossing = 0.2 + (1.0 - 1.0 / 7.0) * 0.05
    assert not estimate.nyquist_limited
    assert estimate.crossing_frequency == pytest.approx(expected_crossing, rel=1e-12)
    assert estimate.resolution_um == pytest.approx(10.0 / expected_crossing, rel=1e-12)


def test_undefined_rings_are_skipped():
    curve = _synthetic_curve(np.array([1.0, np.nan, 0.0, 0.0]))
    curve.defined[1] = False
    estimate = resolution_from_curve(curve)
    # 在环1 (f=0.125) 与环3 (f=0.375) 之间插值
    assert estimate.crossing_frequency == pytest.approx(0.125 + (6.0 / 7.0) * 0.25)


def test_threshold_range():
    with pytest.raises(ValidationError):
        resolution_from_curve(_synthetic_curve(np.ones(4)), threshold=1.0)


def test_loss_examples(rng):
    target = ChannelImage(rng.random((32, 32)))
    assert frc_loss(target, target) == pytest.approx(0.0, abs=1e-12)
    assert frc_loss(ChannelImage(-target.pixels), target) == pytest.approx(2.0, abs=1e-12)


def test_loss_matches_recomputed_curve(rng):
    pred = ChannelImage(rng.random((32, 32)))
    target = ChannelImage(rng.random((32, 32)))
    curve = frc_curve(pred, target)
    expected = 1.0 - np.mean(curve.values[curve.defined])
    assert abs(frc_loss(pred, target) - expected) < 1e-12
    expected_sum = 1.0 - np.sum(curve.values[curve.defined])
    assert abs(frc_loss(pred, target, mode='frc-sum') - expected_sum) < 1e-10


def test_unknown_loss_mode(rng):
    image = ChannelImage(rng.random((16, 16)))
    with pytest.raises(ValidationError):
        frc_loss(image, image, mode='l2')


def test_gradient_vanishes_at_target(rng):
    target = ChannelImage(rng.random((32, 32)))
    assert np.linalg.norm(frc_loss_gradient(target, target)) <= 1e-10


GRADIENT_STEP = 1e-4


def _five_point_gradient(pred, target, mode):
    """逐像素五点中心差分"""
    numeric = np.zeros_like(pred)
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            values = []
            for k in (2, 1, -1, -2):
                shifted = pred.copy()
                shifted[i, j] += k * GRADIENT_STEP
                values.append(frc_loss_array(shifted, target, mode))
            numeric[i, j] = (-values[0] + 8 * values[1] - 8 * values[2] + values[3]) / (12 * GRADIENT_STEP)
    return numeric


def _assert_gradient_matches(rng, mode, pairs):
    for _ in range(pairs):
        pred = rng.random((32, 32))
        target = rng.random((32, 32))
        grad = frc_loss_gradient_array(pred, target, mode)
        numeric = _five_point_gradient(pred, target, mode)
        # 损失的舍入误差除以步长后约1e-11量级，留1e-10的绝对余量
        assert np.all(np.abs(numeric - grad) <= 1e-4 * np.abs(grad) + 1e-10)


@pytest.mark.parametrize('mode', ['frc', 'frc-sum'])
def test_gradient_matches_finite_differences(rng, mode):
    _assert_gradient_matches(rng, mode, pairs=3)


@pytest.mark.slow
@pytest.mark.parametrize('mode', ['frc', 'frc-sum'])
def test_gradient_matches_finite_differences_on_fifty_pairs(rng, mode):
    _assert_gradient_matches(rng, mode, pairs=50)


@pytest.mark.parametrize('mode', ['frc', 'frc-sum'])
def test_gradient_is_orthogonal_to_pred(rng, mode):
    # 对pred正向缩放不变，沿pred的方向导数为0
    for _ in range(20):
        pred = rng.random((32, 32))
        target = rng.random((32, 32))
        grad = frc_loss_gradient_array(pred, target, mode)
        assert abs(float(np.sum(grad * pred))) <= 1e-10


def test_write_curve_csv(tmp_path, rng):
    curve = frc_curve(ChannelImage(rng.random((16, 16))), ChannelImage(rng.random((16, 16))))
    estimate = resolution_from_curve(curve)
    path = str(tmp_path / 'curve.csv')
    write_curve_csv(curve, estimate, path)
    lines = open(path, encoding='utf-8').read().splitlines()
    assert lines[0] == 'ring,freq_cycles_per_px,frc,n_samples'
    assert len(lines) == 1 + 8 + 3
    assert lines[1].startswith('1,0.0625,')
    assert lines[-1] in ('# nyquist_limited=true', '# nyquist_limited=false')
    assert float(lines[-3].split('=')[1]) == estimate.resolution_um


def test_evaluate_cube_resolution_skips_constant_channel():
    noisy = _blurred_noise(2.0, 0.05, size=64)
    cube = SpectralCube.from_array(np.stack([noisy, np.full((64, 64), 0.5)]), 10.0, [100.0, 101.0])
    estimates, summary = evaluate_cube_resolution(cube, workers=2)
    assert estimates[1] is None
    assert estimates[0].resolution_um >= 20.0
    assert summary['n'] == 1
    assert summary['median_um'] == estimates[0].resolution_um
