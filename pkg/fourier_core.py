"""
傅里叶基础模块
二维离散傅里叶变换、频域环划分、高斯核与周期卷积，供FRC和PSF模块共用
"""
import math
import logging
from functools import lru_cache

import numpy as np

from cube_io import ChannelImage
from errors import SymmetryError, ValidationError


logger = logging.getLogger('HyReS.Fourier')

# 逆变换虚部残差允许上限（相对于实部幅度）
SYMMETRY_TOLERANCE = 1e-6


class ComplexField:
    """频域复数场，DC位于 (0,0)"""
    __slots__ = ('height', 'width', '_values')

    def __init__(self, values):
        array = np.array(values, dtype=np.complex128, copy=True)
        if array.ndim != 2:
            raise ValidationError(f"复数场必须是二维数组，实际维度: {array.ndim}")
        if not np.all(np.isfinite(array)):
            raise ValidationError("复数场包含NaN或Inf")
        array.setflags(write=False)
        self.height, self.width = array.shape
        self._values = array

    @property
    def values(self):
        return self._values

    @property
    def shape(self):
        return self.height, self.width


class RingPartition:
    """频域环划分：每个频率样本的环号、环数R与每环样本数"""
    __slots__ = ('height', 'width', 'ring_count', 'index', 'counts')

    def __init__(self, height, width, ring_count, index, counts):
        self.height = height
        self.width = width
        self.ring_count = ring_count
        self.index = index
        self.counts = counts

    @property
    def excluded(self):
        """环号大于R被排除的样本数"""
        return int(np.count_nonzero(self.index < 0))

    def ring_sums(self, values):
        """对每个环 0..R 求和（排除的样本不计入）"""
        mask = self.index >= 0
        return np.bincount(self.index[mask], weights=np.asarray(values)[mask],
                           minlength=self.ring_count + 1)


class Kernel:
    """奇数边长的实数卷积核"""
    __slots__ = ('size', '_weights')

    def __init__(self, weights):
        array = np.array(weights, dtype=np.float64, copy=True)
        if array.ndim != 2 or array.shape[0] != array.shape[1] or array.shape[0] % 2 == 0:
            raise ValidationError(f"卷积核必须是奇数边长的方阵，实际形状: {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValidationError("卷积核包含NaN或Inf")
        array.setflags(write=False)
        self.size = array.shape[0]
        self._weights = array

    @classmethod
    def delta(cls, size):
        """中心单位冲激核"""
        weights = np.zeros((size, size))
        weights[size // 2, size // 2] = 1.0
        return cls(weights)

    @property
    def weights(self):
        return self._weights


def dft2(image: ChannelImage) -> ComplexField:
    """未归一化的二维正向DFT"""
    return ComplexField(np.fft.fft2(image.pixels))


def idft2(field: ComplexField, return_residue=False):
    """
    带 1/(HW) 归一化的二维逆DFT，丢弃虚部

    Args:
        field: 频域复数场
        return_residue: 是否同时返回最大虚部残差

    Returns:
        ChannelImage，或 (ChannelImage, 残差)
    """
    spatial = np.fft.ifft2(field.values)
    residue = float(np.max(np.abs(spatial.imag))) if spatial.size else 0.0
    scale = max(1.0, float(np.max(np.abs(spatial.real))))
    if residue > SYMMETRY_TOLERANCE * scale:
        raise SymmetryError(f"逆变换虚部残差 {residue:.3e} 超过阈值，输入频谱不满足厄米对称")
    if residue > 0:
        logger.debug(f"逆变换丢弃虚部残差: {residue:.3e}")
    image = ChannelImage(spatial.real)
    if return_residue:
        return image, residue
    return image


def centered_frequencies(n):
    """整数频率坐标，范围 [-n/2, n/2)，与fft布局对齐"""
    return np.rint(np.fft.fftfreq(n) * n).astype(np.int64)


@lru_cache(maxsize=64)
def ring_partition(height, width) -> RingPartition:
    """
    按 round(√(u²+v²)) 划分频域环，只依赖尺寸，结果被缓存

    Args:
        height: 图像高度
        width: 图像宽度
    """
    if height < 2 or width < 2:
        raise ValidationError(f"环划分需要两个轴都至少2个像素，实际: {height}x{width}")
    ring_count = min(height, width) // 2
    u = centered_frequencies(height)[:, None]
    v = centered_frequencies(width)[None, :]
    radius = np.rint(np.sqrt(u * u + v * v)).astype(np.int64)
    index = np.where(radius > ring_count, -1, radius)
    index.setflags(write=False)
    counts = np.bincount(index[index >= 0], minlength=ring_count + 1)
    counts.setflags(write=False)
    return RingPartition(height, width, ring_count, index, counts)


def minimum_kernel_size(sigma):
    """不小于6σ的最小奇数边长"""
    size = int(math.ceil(6.0 * sigma))
    return size if size % 2 == 1 else size + 1


def gaussian_kernel(sigma, size=None) -> Kernel:
    """
    归一化的旋转对称高斯核

    Args:
        sigma: 标准差（像素）
        size: 奇数边长，None时自动取 2·ceil(4σ)+1
    """
    if not sigma > 0:
        raise ValidationError(f"高斯核sigma ({sigma}) 必须为正数")
    if size is None:
        size = 2 * int(math.ceil(4.0 * sigma)) + 1
    if size % 2 == 0:
        raise ValidationError(f"高斯核边长 ({size}) 必须为奇数")
    if size < minimum_kernel_size(sigma):
        raise ValidationError(f"高斯核边长 ({size}) 小于 6σ 对应的最小奇数 {minimum_kernel_size(sigma)}")
    half = size // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    weights = np.exp(-(offsets[:, None] ** 2 + offsets[None, :] ** 2) / (2.0 * sigma * sigma))
    return Kernel(weights / weights.sum())


def _kernel_array(kernel):
    weights = kernel.weights if isinstance(kernel, Kernel) else np.asarray(kernel, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1] or weights.shape[0] % 2 == 0:
        raise ValidationError(f"卷积核必须是奇数边长的方阵，实际形状: {weights.shape}")
    return weights


def convolve_periodic_array(pixels, kernel):
    """
    周期边界卷积（数组版本）：y(i,j) = Σ w(a,b)·x(i−a, j−b)

    按行优先的抽头顺序逐项累加，零权重抽头跳过，因此中心冲激核得到完全相同的输出。
    """
    weights = _kernel_array(kernel)
    size = weights.shape[0]
    height, width = pixels.shape
    if size > min(height, width):
        raise ValidationError(f"卷积核边长 {size} 超过图像尺寸 {height}x{width}")
    half = size // 2
    out = np.zeros((height, width), dtype=np.float64)
    for a in range(-half, half + 1):
        for b in range(-half, half + 1):
            w = weights[a + half, b + half]
            if w != 0.0:
                out += w * np.roll(pixels, (a, b), axis=(0, 1))
    return out


def convolve_periodic(image: ChannelImage, kernel) -> ChannelImage:
    """周期边界卷积"""
    return ChannelImage(convolve_periodic_array(image.pixels, kernel))


def kernel_gradient(pixels, upstream, size):
    """
    周期卷积对卷积核的梯度：∂L/∂w(a,b) = Σ G(i,j)·x(i−a, j−b)

    Args:
        pixels: 卷积输入 x
        upstream: 损失对卷积输出的梯度 G
        size: 卷积核边长
    """
    half = size // 2
    grad = np.zeros((size, size), dtype=np.float64)
    for a in range(-half, half + 1):
        for b in range(-half, half + 1):
            grad[a + half, b + half] = np.sum(upstream * np.roll(pixels, (a, b), axis=(0, 1)))
    return grad
