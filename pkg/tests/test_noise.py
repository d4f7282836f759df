import numpy as np
import pytest

from noise import (STREAM_OBSERVATION, STREAM_PATCHES, gaussian_field, make_rng, standard_normal,
                   uniform53)


def test_same_seed_same_stream_is_deterministic():
    a = standard_normal((32, 32), seed=11, stream=STREAM_OBSERVATION)
    b = standard_normal((32, 32), seed=11, stream=STREAM_OBSERVATION)
    assert np.array_equal(a, b)


def test_streams_are_independent():
    a = standard_normal(1000, seed=11, stream=STREAM_OBSERVATION)
    b = standard_normal(1000, seed=11, stream=STREAM_PATCHES)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.15


def test_uniform_ranges():
    u_open, u_half = uniform53(3, 0, 5000)
    assert np.all(u_open > 0) and np.all(u_open <= 1)
    assert np.all(u_half >= 0) and np.all(u_half < 1)


def test_box_muller_uses_cos_then_sin():
    u1, u2 = uniform53(5, 7, 2)
    samples = standard_normal(4, seed=5, stream=7)
    radius = np.sqrt(-2.0 * np.log(u1))
    assert samples[0] == pytest.approx(radius[0] * np.cos(2 * np.pi * u2[0]), rel=1e-14)
    assert samples[1] == pytest.approx(radius[0] * np.sin(2 * np.pi * u2[0]), rel=1e-14)
    assert samples[2] == pytest.approx(radius[1] * np.cos(2 * np.pi * u2[1]), rel=1e-14)


def test_odd_sample_count():
    assert standard_normal(7, seed=1).shape == (7,)
    assert np.array_equal(standard_normal(7, seed=1), standard_normal(8, seed=1)[:7])


@pytest.mark.parametrize('seed', [-1, 2 ** 64])
def test_seed_must_be_u64(seed):
    with pytest.raises(ValueError):
        make_rng(seed)


def test_gaussian_field_moments():
    field = gaussian_field((1000, 1000), 0.05, seed=0)
    assert abs(field.mean()) < 3 * 0.05 / 1000
    assert abs(field.std() - 0.05) < 0.01 * 0.05


def test_negative_sigma():
    with pytest.raises(ValueError):
        gaussian_field((4, 4), -0.1, seed=0)


def test_make_rng_is_reproducible():
    assert np.array_equal(make_rng(9, 2).integers(0, 100, 20), make_rng(9, 2).integers(0, 100, 20))
