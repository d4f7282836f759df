"""
退化模块
训练数据预处理流程：低SNR通道过滤、裁剪到倍数、双三次下采样、高斯噪声与随机图块提取
"""
import math
import logging
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from cube_io import ChannelImage, SpectralCube
from errors import EmptyCubeError, ValidationError
from fourier_core import convolve_periodic_array, gaussian_kernel
from noise import (STREAM_CHANNEL_BASE, STREAM_NOISY_SUBSET, STREAM_PAIR_BASE, STREAM_PATCHES, gaussian_field,
                   make_rng)


logger = logging.getLogger('HyReS.Degradation')

# 双三次核参数
CUBIC_A = -0.5


@dataclass(frozen=True)
class DegradationConfig:
    """退化参数"""
    scale: int = 4
    noise_sigma: float = 0.02
    noisy_fraction: float = 0.2
    snr_tau: float = 1e-6
    blur_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.scale) != self.scale or self.scale < 2:
            raise ValidationError(f"缩放倍数 ({self.scale}) 必须是不小于2的整数")
        if not 0 <= self.noisy_fraction <= 1:
            raise ValidationError(f"加噪通道比例 ({self.noisy_fraction}) 超出有效范围 (0-1)")
        if self.snr_tau < 0:
            raise ValidationError(f"SNR阈值 ({self.snr_tau}) 不能为负")
        if self.noise_sigma < 0 or self.blur_sigma < 0:
            raise ValidationError("噪声与模糊标准差不能为负")

    @classmethod
    def from_settings(cls, settings, seed=0):
        """由ConfigManager.settings构造"""
        return cls(scale=settings['scale'], noise_sigma=settings['noise_sigma'],
                   noisy_fraction=settings['noisy_fraction'], snr_tau=settings['snr_tau'],
                   blur_sigma=settings['blur_sigma'], seed=seed)


@dataclass
class PairSet:
    """
    对齐的LR/HR图块对

    lr: (N, p, p)，hr: (N, s·p, s·p)；provenance 为每对的 (通道索引, LR行偏移, LR列偏移)
    """
    lr: np.ndarray
    hr: np.ndarray
    scale: int
    patch_size: int
    provenance: list

    def __post_init__(self):
        if self.lr.shape[0] != self.hr.shape[0]:
            raise ValidationError("LR与HR图块数量不一致")
        expected = (self.scale * self.patch_size, self.scale * self.patch_size)
        if self.lr.shape[1:] != (self.patch_size, self.patch_size) or self.hr.shape[1:] != expected:
            raise ValidationError(f"图块尺寸不符合 {self.scale}x 关系: LR {self.lr.shape[1:]}, HR {self.hr.shape[1:]}")

    def __len__(self):
        return self.lr.shape[0]


def mse_signal(image: ChannelImage):
    """信号强度 (1/mn)·ΣΣ D(i,j)²"""
    pixels = image.pixels
    return float(np.sum(pixels * pixels) / pixels.size)


def filter_low_snr(cube: SpectralCube, tau):
    """
    过滤信号强度低于阈值的通道

    Args:
        cube: 输入立方体
        tau: MSE阈值

    Returns:
        (过滤后的立方体, 保留掩码)
    """
    if tau < 0:
        raise ValidationError(f"SNR阈值 ({tau}) 不能为负")
    mask = np.array([mse_signal(ch) >= tau for ch in cube.channels])
    if not mask.any():
        raise EmptyCubeError(f"所有 {len(cube)} 个通道都低于SNR阈值 {tau}")
    removed = int(np.count_nonzero(~mask))
    if removed:
        logger.info(f"SNR过滤移除了 {removed} 个通道，保留 {int(mask.sum())} 个")
    return cube.select(np.nonzero(mask)[0]), mask


def crop_to_multiple(cube: SpectralCube, scale):
    """保留左上角 ⌊H/s⌋·s × ⌊W/s⌋·s 区域"""
    if cube.height < scale or cube.width < scale:
        raise ValidationError(f"立方体尺寸 {cube.height}x{cube.width} 小于缩放倍数 {scale}")
    height = cube.height // scale * scale
    width = cube.width // scale * scale
    if (height, width) == (cube.height, cube.width):
        return cube
    return cube.replace(channels=[ChannelImage(ch.pixels[:height, :width]) for ch in cube.channels])


def cubic_weight(distance):
    """a = −0.5 的双三次插值核"""
    x = np.abs(distance)
    a = CUBIC_A
    inner = ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    outer = ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    return np.where(x <= 1.0, inner, np.where(x < 2.0, outer, 0.0))


def _resample_axis(array, scale, direction, axis):
    """沿一个轴做4抽头双三次重采样，边界坐标钳位"""
    length = array.shape[axis]
    if direction == 'down':
        out_length = length // scale
        centers = (np.arange(out_length) + 0.5) * scale - 0.5
    else:
        out_length = length * scale
        centers = (np.arange(out_length) + 0.5) / scale - 0.5
    base = np.floor(centers).astype(np.int64)
    frac = centers - base
    out = None
    # 抽头按 −1, 0, 1, 2 的固定顺序累加
    for tap in range(-1, 3):
        index = np.clip(base + tap, 0, length - 1)
        weight = cubic_weight(frac - tap)
        shape = [1, 1]
        shape[axis] = out_length
        term = np.take(array, index, axis=axis) * weight.reshape(shape)
        out = term if out is None else out + term
    return out


def bicubic_resize_array(pixels, scale, direction):
    """数组版双三次缩放"""
    if direction not in ('down', 'up'):
        raise ValidationError(f"未知的缩放方向: {direction}")
    if direction == 'down' and (pixels.shape[0] % scale or pixels.shape[1] % scale):
        raise ValidationError(f"下采样要求尺寸可被 {scale} 整除，实际: {pixels.shape[0]}x{pixels.shape[1]}")
    rows = _resample_axis(pixels, scale, direction, axis=0)
    return _resample_axis(rows, scale, direction, axis=1)


def bicubic_resize(image: ChannelImage, scale, direction) -> ChannelImage:
    """
    双三次缩放

    Args:
        image: 输入图像
        scale: 整数倍数
        direction: 'down' 或 'up'
    """
    return ChannelImage(bicubic_resize_array(image.pixels, scale, direction))


def add_gaussian_noise(image: ChannelImage, sigma, seed, include_background=False, stream=0) -> ChannelImage:
    """
    加性高斯噪声

    Args:
        image: 输入图像
        sigma: 噪声标准差
        seed: 64位种子
        include_background: False时值恰为0的背景像素保持不变
        stream: 派生流编号

    Returns:
        ChannelImage，结果钳位到[0,1]；sigma为0时原样返回
    """
    if sigma < 0:
        raise ValidationError(f"噪声标准差 ({sigma}) 不能为负")
    if sigma == 0:
        return image
    pixels = image.pixels
    noise = gaussian_field(pixels.shape, sigma, seed, stream)
    if not include_background:
        noise = np.where(pixels == 0.0, 0.0, noise)
    return ChannelImage(np.clip(pixels + noise, 0.0, 1.0))


def _noisy_subset(channel_count, fraction, seed):
    count = int(round(fraction * channel_count))
    order = make_rng(seed, STREAM_NOISY_SUBSET).permutation(channel_count)
    return set(int(i) for i in order[:count])


def degrade_cube(cube: SpectralCube, config: DegradationConfig, show_progress=False):
    """
    生成整幅LR立方体（过滤、裁剪、可选模糊、下采样、加噪）

    Returns:
        (裁剪后的HR立方体, LR立方体)；LR像素尺寸为HR的s倍
    """
    filtered, _ = filter_low_snr(cube, config.snr_tau)
    hr = crop_to_multiple(filtered, config.scale)
    noisy = _noisy_subset(len(hr), config.noisy_fraction, config.seed)
    kernel = gaussian_kernel(config.blur_sigma) if config.blur_sigma > 0 else None

    channels = []
    for index, channel in enumerate(tqdm(hr.channels, desc='退化', disable=not show_progress)):
        pixels = channel.pixels
        if kernel is not None:
            pixels = convolve_periodic_array(pixels, kernel)
        low = ChannelImage(bicubic_resize_array(pixels, config.scale, 'down'))
        channels.append(add_gaussian_noise(low, config.noise_sigma, config.seed,
                                           include_background=index in noisy,
                                           stream=STREAM_CHANNEL_BASE + index))
    lr = hr.replace(channels=channels, pixel_size_um=hr.pixel_size_um * config.scale)
    logger.info(f"退化完成: {len(hr)} 个通道, {hr.height}x{hr.width} -> {lr.height}x{lr.width}, "
                f"背景加噪通道 {len(noisy)} 个")
    return hr, lr


def make_training_pairs(hr: SpectralCube, dcfg: DegradationConfig, tcfg, show_progress=False) -> PairSet:
    """
    构造训练图块对

    先在（可选模糊后的）HR通道上取块，再逐块做双三次下采样与加噪，
    因此 σ=0 时每个LR块恰为其HR块的下采样。
    每通道的图块数为 ⌈LR面积 / 图块面积⌉，偏移由 (seed, STREAM_PATCHES) 随机流决定。

    Args:
        hr: 高分辨率立方体
        dcfg: 退化参数
        tcfg: TrainingConfig（使用 patch_size）

    Returns:
        PairSet
    """
    patch = int(tcfg.patch_size)
    scale = int(dcfg.scale)
    filtered, _ = filter_low_snr(hr, dcfg.snr_tau)
    cropped = crop_to_multiple(filtered, scale)
    lr_height, lr_width = cropped.height // scale, cropped.width // scale
    if lr_height < patch or lr_width < patch:
        raise ValidationError(f"LR尺寸 {lr_height}x{lr_width} 小于一个图块 ({patch}x{patch})")

    noisy = _noisy_subset(len(cropped), dcfg.noisy_fraction, dcfg.seed)
    kernel = gaussian_kernel(dcfg.blur_sigma) if dcfg.blur_sigma > 0 else None
    rng = make_rng(dcfg.seed, STREAM_PATCHES)
    count = math.ceil(lr_height * lr_width / (patch * patch))
    side = patch * scale
    lr_patches, hr_patches, provenance = [], [], []
    for index, channel in enumerate(tqdm(cropped.channels, desc='图块', disable=not show_progress)):
        rows = rng.integers(0, lr_height - patch + 1, size=count)
        cols = rng.integers(0, lr_width - patch + 1, size=count)
        high = channel.pixels
        # 模糊在整幅通道上做（周期边界），下采样只在块内做
        source = convolve_periodic_array(high, kernel) if kernel is not None else high
        for row, col in zip(rows.tolist(), cols.tolist()):
            top, left = row * scale, col * scale
            low = ChannelImage(bicubic_resize_array(source[top:top + side, left:left + side], scale, 'down'))
            low = add_gaussian_noise(low, dcfg.noise_sigma, dcfg.seed, include_background=index in noisy,
                                     stream=STREAM_PAIR_BASE + len(provenance))
            lr_patches.append(low.pixels)
            hr_patches.append(high[top:top + side, left:left + side])
            provenance.append((index, row, col))

    pairs = PairSet(np.stack(lr_patches), np.stack(hr_patches), scale, patch, provenance)
    logger.info(f"生成训练图块对 {len(pairs)} 个 (LR {patch}x{patch}, HR {side}x{side}), "
                f"背景加噪通道 {len(noisy)} 个")
    return pairs
