"""
随机数模块
基于numpy Philox计数器型位生成器的可复现噪声与随机数流

同一 (seed, stream) 在任何平台上都产生相同的64位原始序列；
正态样本由Box–Muller变换生成（先cos分支，再sin分支）。
"""
import numpy as np


# 派生流编号，写入Philox计数器的最高64位
STREAM_OBSERVATION = 1
STREAM_PATCHES = 2
STREAM_NOISY_SUBSET = 3
STREAM_SHUFFLE = 4
STREAM_PHANTOM = 5
STREAM_DISCRIMINATOR = 6
STREAM_CHANNEL_BASE = 1 << 20
# 训练图块对逐块加噪
STREAM_PAIR_BASE = 1 << 40

_TWO_POW_53 = float(2 ** 53)


def _bit_generator(seed, stream):
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"随机种子 ({seed}) 必须是64位无符号整数")
    return np.random.Philox(key=seed, counter=int(stream) << 192)


def make_rng(seed, stream=0):
    """返回指定 (seed, stream) 的numpy Generator"""
    return np.random.Generator(_bit_generator(seed, stream))


def uniform53(seed, stream, count):
    """
    生成 count 个53位精度的均匀随机数

    Returns:
        (u_open, u_half): u_open ∈ (0,1]，u_half ∈ [0,1)，各 count 个
    """
    raw = _bit_generator(seed, stream).random_raw(2 * count)
    mantissa = (raw >> np.uint64(11)).astype(np.float64)
    u_open = (mantissa[0::2] + 1.0) / _TWO_POW_53
    u_half = mantissa[1::2] / _TWO_POW_53
    return u_open, u_half


def standard_normal(shape, seed, stream=0):
    """
    Box–Muller标准正态样本

    Args:
        shape: 输出形状
        seed: 64位种子
        stream: 派生流编号
    """
    size = int(np.prod(shape))
    pairs = (size + 1) // 2
    u1, u2 = uniform53(seed, stream, pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    samples = np.empty(2 * pairs, dtype=np.float64)
    samples[0::2] = radius * np.cos(angle)
    samples[1::2] = radius * np.sin(angle)
    return samples[:size].reshape(shape)


def gaussian_field(shape, sigma, seed, stream=0):
    """均值为0、标准差为sigma的高斯噪声场"""
    if sigma < 0:
        raise ValueError(f"噪声标准差 ({sigma}) 不能为负")
    return sigma * standard_normal(shape, seed, stream)
