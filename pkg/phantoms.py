"""
体模模块
测试与报告使用的合成目标：宽带噪声、平滑高斯斑块、棋盘格与多通道合成立方体
"""
import numpy as np

from cube_io import ChannelImage, SpectralCube
from noise import STREAM_PHANTOM, make_rng, standard_normal


def _stream(index):
    return (STREAM_PHANTOM << 32) + int(index)


def white_noise_phantom(height, width=None, seed=0, index=0) -> ChannelImage:
    """单位方差白噪声（宽带）目标"""
    width = height if width is None else width
    return ChannelImage(standard_normal((height, width), seed, _stream(index)))


def smooth_phantom(height, seed=0, index=0, width=None, blobs=24) -> ChannelImage:
    """
    随机高斯斑块叠加的平滑目标，值域 [0.1, 0.9]

    Args:
        height: 高度
        seed: 随机种子
        index: 同一种子下的体模编号
        width: 宽度，默认与高度相同
        blobs: 斑块数量
    """
    width = height if width is None else width
    rng = make_rng(seed, _stream(index))
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    image = np.zeros((height, width))
    for _ in range(blobs):
        center_r = rng.uniform(0, height)
        center_c = rng.uniform(0, width)
        radius = rng.uniform(0.06, 0.2) * min(height, width)
        amplitude = rng.uniform(0.3, 1.0)
        image += amplitude * np.exp(-((rows - center_r) ** 2 + (cols - center_c) ** 2) / (2.0 * radius * radius))
    span = image.max() - image.min()
    image = (image - image.min()) / span if span > 0 else np.zeros_like(image)
    return ChannelImage(0.1 + 0.8 * image)


def checkerboard(height, width=None, block=4, low=0.0, high=1.0) -> ChannelImage:
    """((i//block + j//block) % 2) 棋盘格"""
    width = height if width is None else width
    rows = np.arange(height)[:, None] // block
    cols = np.arange(width)[None, :] // block
    return ChannelImage(np.where((rows + cols) % 2 == 1, high, low))


def synthetic_cube(channels, height, width=None, seed=0, pixel_size_um=25.0, first_mz=100.0,
                   background_fraction=0.0) -> SpectralCube:
    """
    合成多通道立方体：每个通道为独立的平滑体模乘以随通道变化的丰度

    Args:
        channels: 通道数
        height: 高度
        width: 宽度，默认与高度相同
        seed: 随机种子
        pixel_size_um: 像素尺寸（微米）
        first_mz: 第一个通道的m/z标签，后续每通道加1
        background_fraction: 置零作为背景的像素比例（按强度最低的像素）
    """
    width = height if width is None else width
    rng = make_rng(seed, _stream(1 << 20))
    abundances = rng.uniform(0.3, 1.0, size=channels)
    planes = []
    for c in range(channels):
        plane = smooth_phantom(height, seed, index=c, width=width).pixels * abundances[c]
        if background_fraction > 0:
            cutoff = np.quantile(plane, background_fraction)
            plane = np.where(plane <= cutoff, 0.0, plane)
        planes.append(plane)
    labels = first_mz + np.arange(channels, dtype=np.float64)
    return SpectralCube.from_array(np.stack(planes), pixel_size_um, labels)
