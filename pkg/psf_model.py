"""
PSF模块
前向成像模型仿真、基于傅里叶比值的差分PSF，以及旋转对称高斯拟合与FWHM比较
"""
import csv
import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from cube_io import ChannelImage
from errors import FitError, ValidationError
from fourier_core import convolve_periodic_array, gaussian_kernel, ring_partition
from noise import STREAM_OBSERVATION, gaussian_field


logger = logging.getLogger('HyReS.PSF')

FWHM_FACTOR = 2.0 * math.sqrt(2.0 * math.log(2.0))
SIGMA_GRID_POINTS = 200
SIGMA_GRID_MIN = 0.25
# 高频环/低频环各占的比例
OFFSET_RING_FRACTION = 0.10


@dataclass(frozen=True)
class ObservationConfig:
    """成像模型参数：模糊σ（像素）、噪声σ（[0,1]强度单位）、种子"""
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ValidationError(f"成像参数不能为负: blur={self.blur_sigma}, noise={self.noise_sigma}")


class DifferencePsf:
    """差分PSF：中心化的实空间核、正则化系数与常数偏移估计"""
    __slots__ = ('kernel', 'epsilon', 'offset', 'offset_removed')

    def __init__(self, kernel, epsilon, offset, offset_removed):
        self.kernel = kernel
        self.epsilon = epsilon
        self.offset = offset
        self.offset_removed = offset_removed


@dataclass(frozen=True)
class GaussianFit:
    """g(ρ) = A·exp(−ρ²/(2σ²)) + c 的拟合结果"""
    amplitude: float
    sigma: float
    offset: float
    residual_rms: float

    @property
    def fwhm(self):
        return FWHM_FACTOR * self.sigma


@dataclass(frozen=True)
class RadialProfile:
    """径向平均剖面（1像素宽的半径箱）"""
    rho: np.ndarray
    mean_value: np.ndarray
    n_samples: np.ndarray


@dataclass(frozen=True)
class DeblurReport:
    """去模糊强度比较：ratio > 1 表示candidate相对baseline的去模糊强于reference"""
    candidate_fit: GaussianFit
    reference_fit: GaussianFit

    @property
    def ratio(self):
        return self.candidate_fit.fwhm / self.reference_fit.fwhm

    convention = ('FWHM取自 difference_psf(baseline, X) 的高斯拟合；'
                  'ratio = FWHM(candidate) / FWHM(reference)，大于1表示candidate去模糊更强')


def simulate_observation(obj: ChannelImage, config: ObservationConfig) -> ChannelImage:
    """
    成像模型：object ⊗ 高斯PSF + 高斯噪声

    Args:
        obj: 真实目标图像
        config: 成像参数

    Returns:
        ChannelImage
    """
    pixels = obj.pixels
    if config.blur_sigma > 0:
        pixels = convolve_periodic_array(pixels, gaussian_kernel(config.blur_sigma))
    if config.noise_sigma > 0:
        pixels = pixels + gaussian_field(pixels.shape, config.noise_sigma, config.seed, STREAM_OBSERVATION)
    return ChannelImage(pixels)


def _band_rings(ring_count):
    count = max(1, int(math.ceil(OFFSET_RING_FRACTION * ring_count)))
    low = np.arange(1, min(count, ring_count) + 1)
    high = np.arange(ring_count - count + 1, ring_count + 1)
    return low, high


def difference_psf(a: ChannelImage, b: ChannelImage, epsilon=1e-6) -> DifferencePsf:
    """
    差分PSF：F⁻¹(Â·conj(B̂) / (|B̂|² + ε·max|B̂|²))

    a 应为两者中更模糊的图像，此时核为高斯形。高频环的比值均值作为白噪声常数项估计，
    当其小于低频环均值的一半时从比值中扣除（比值平坦时保留其水平）。

    Args:
        a: 分子图像
        b: 分母图像
        epsilon: 相对正则化系数

    Returns:
        DifferencePsf
    """
    if a.shape != b.shape:
        raise ValidationError(f"差分PSF输入尺寸不一致: {a.shape} vs {b.shape}")
    if not epsilon > 0:
        raise ValidationError(f"正则化系数 ({epsilon}) 必须为正数")
    if not np.any(b.pixels):
        raise ValidationError("差分PSF的分母图像不能全为零")

    fa = np.fft.fft2(a.pixels)
    fb = np.fft.fft2(b.pixels)
    power_b = fb.real ** 2 + fb.imag ** 2
    ratio = fa * np.conj(fb) / (power_b + epsilon * power_b.max())

    partition = ring_partition(*a.shape)
    ring_totals = partition.ring_sums(ratio.real)
    ring_means = ring_totals / np.maximum(partition.counts, 1)
    low, high = _band_rings(partition.ring_count)
    offset = float(np.sum(ring_totals[high]) / np.sum(partition.counts[high]))
    low_level = float(np.sum(ring_totals[low]) / np.sum(partition.counts[low]))
    offset_removed = abs(offset) < 0.5 * abs(low_level)
    if offset_removed:
        ratio = ratio - offset
    logger.debug(f"差分PSF常数项: {offset:.4g} (低频水平 {low_level:.4g}, 扣除: {offset_removed}); "
                 f"环均值范围 [{ring_means.min():.3g}, {ring_means.max():.3g}]")

    spatial = np.fft.ifft2(ratio)
    kernel = ChannelImage(np.fft.fftshift(spatial.real))
    return DifferencePsf(kernel, epsilon, offset, offset_removed)


def radial_profile(kernel: ChannelImage):
    """以 (H//2, W//2) 为中心做1像素宽的径向平均，半径覆盖 0..min(H,W)//2"""
    height, width = kernel.shape
    rows = np.arange(height) - height // 2
    cols = np.arange(width) - width // 2
    distance = np.sqrt(rows[:, None] ** 2 + cols[None, :] ** 2)
    bins = np.rint(distance).astype(np.int64)
    max_bin = min(height, width) // 2
    mask = bins <= max_bin
    counts = np.bincount(bins[mask], minlength=max_bin + 1)
    sums = np.bincount(bins[mask], weights=kernel.pixels[mask], minlength=max_bin + 1)
    valid = counts > 0
    return RadialProfile(np.nonzero(valid)[0].astype(np.float64), sums[valid] / counts[valid],
                         counts[valid]), (bins[mask], distance[mask], valid)


def fit_radial_gaussian(psf, sigma_tol=1e-4) -> GaussianFit:
    """
    旋转对称高斯拟合

    对数网格扫描σ（0.25到min(H,W)/4，200点），每个σ下A、c由线性最小二乘闭式求解，
    再用黄金分割法细化σ。每个半径箱的模型值取该箱内各像素精确半径处高斯值的平均。

    Args:
        psf: DifferencePsf或ChannelImage
        sigma_tol: σ细化的绝对容差（像素）

    Returns:
        GaussianFit
    """
    kernel = psf.kernel if isinstance(psf, DifferencePsf) else psf
    profile, (bins, distance, valid) = radial_profile(kernel)
    if profile.rho.size < 3:
        raise FitError(f"径向箱数量不足 ({profile.rho.size} < 3)")
    data = profile.mean_value
    counts = np.bincount(bins, minlength=valid.size)[valid]
    squared = distance ** 2

    def solve(sigma):
        basis_sum = np.bincount(bins, weights=np.exp(-squared / (2.0 * sigma * sigma)), minlength=valid.size)
        basis = basis_sum[valid] / counts
        design = np.column_stack((basis, np.ones_like(basis)))
        coeffs, *_ = np.linalg.lstsq(design, data, rcond=None)
        residual = data - design @ coeffs
        return float(np.dot(residual, residual)), coeffs

    upper = min(kernel.shape) / 4.0
    grid = np.geomspace(SIGMA_GRID_MIN, upper, SIGMA_GRID_POINTS)
    costs = np.array([solve(s)[0] for s in grid])
    best = int(np.argmin(costs))
    sigma = float(grid[best])
    if 0 < best < len(grid) - 1:
        result = optimize.minimize_scalar(lambda s: solve(s)[0], method='golden',
                                          bracket=(grid[best - 1], grid[best], grid[best + 1]),
                                          options={'xtol': sigma_tol / grid[best]})
        if result.fun <= costs[best]:
            sigma = float(result.x)
    cost, (amplitude, offset) = solve(sigma)

    residual_rms = math.sqrt(cost / data.size)
    data_rms = math.sqrt(float(np.mean(data ** 2)))
    if residual_rms > 0.5 * data_rms:
        raise FitError(f"高斯拟合失败：残差RMS {residual_rms:.3g} 超过数据RMS {data_rms:.3g} 的一半（非高斯形）")
    return GaussianFit(float(amplitude), sigma, float(offset), residual_rms)


def compare_deblur(candidate: ChannelImage, reference: ChannelImage, baseline: ChannelImage,
                   epsilon=1e-6, sigma_tol=1e-4) -> DeblurReport:
    """
    比较candidate与reference相对同一baseline的去模糊强度

    Args:
        candidate: 待评估的复原图像
        reference: 参考复原图像
        baseline: 共同的模糊基线（如双三次上采样）

    Returns:
        DeblurReport
    """
    if not (candidate.shape == reference.shape == baseline.shape):
        raise ValidationError("compare_deblur的三幅图像尺寸必须一致")
    candidate_fit = fit_radial_gaussian(difference_psf(baseline, candidate, epsilon), sigma_tol)
    reference_fit = fit_radial_gaussian(difference_psf(baseline, reference, epsilon), sigma_tol)
    report = DeblurReport(candidate_fit, reference_fit)
    logger.info(f"去模糊比较: FWHM candidate {candidate_fit.fwhm:.4g} px, "
                f"reference {reference_fit.fwhm:.4g} px, ratio {report.ratio:.4g}")
    return report


def write_psf_csv(psf: DifferencePsf, fit, path):
    """
    写出差分PSF径向剖面CSV，拟合结果作为注释行

    Args:
        psf: 差分PSF
        fit: GaussianFit或None（拟合失败）
        path: 输出路径
    """
    profile, _ = radial_profile(psf.kernel)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['rho_px', 'mean_value', 'n_samples'])
        for rho, value, count in zip(profile.rho, profile.mean_value, profile.n_samples):
            writer.writerow([int(rho), '%.17g' % value, int(count)])
        if fit is not None:
            f.write(f"# A={float(fit.amplitude)!r} sigma_px={float(fit.sigma)!r} c={float(fit.offset)!r} "
                    f"fwhm_px={float(fit.fwhm)!r} residual_rms={float(fit.residual_rms)!r}\n")
        else:
            f.write("# fit=failed\n")
        f.write(f"# epsilon={float(psf.epsilon)!r} offset={float(psf.offset)!r} "
                f"offset_removed={str(psf.offset_removed).lower()}\n")
    logger.info(f"差分PSF剖面已写出: {path}")
