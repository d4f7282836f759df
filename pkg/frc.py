"""
FRC模块
傅里叶环相关曲线、单图像FRC、基于阈值的分辨率估计，以及可微FRC损失与解析梯度
"""
import csv
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from cube_io import ChannelImage
from errors import UndefinedCurveError, ValidationError
from fourier_core import ring_partition


logger = logging.getLogger('HyReS.FRC')

DEFAULT_THRESHOLD = 1.0 / 7.0
# 环能量低于总能量的该比例视为零（常数图像的舍入残差）
ENERGY_FLOOR = 1e-20


class FrcCurve:
    """FRC曲线：环 1..R 的相关值、归一化频率、样本数与像素尺寸"""
    __slots__ = ('rings', 'frequencies', 'values', 'defined', 'counts',
                 'pixel_size_um', 'decimation')

    def __init__(self, rings, frequencies, values, defined, counts, pixel_size_um=1.0, decimation=1):
        self.rings = np.asarray(rings, dtype=np.int64)
        self.frequencies = np.asarray(frequencies, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        self.defined = np.asarray(defined, dtype=bool)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.pixel_size_um = float(pixel_size_um)
        self.decimation = int(decimation)
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValidationError("FRC曲线频率必须严格递增")

    @property
    def effective_pixel_size_um(self):
        """考虑子采样后的有效像素尺寸"""
        return self.pixel_size_um * self.decimation

    def __len__(self):
        return len(self.rings)


class ResolutionEstimate:
    """分辨率估计结果"""
    __slots__ = ('resolution_um', 'crossing_frequency', 'threshold', 'nyquist_limited')

    def __init__(self, resolution_um, crossing_frequency, threshold, nyquist_limited):
        self.resolution_um = float(resolution_um)
        self.crossing_frequency = float(crossing_frequency)
        self.threshold = float(threshold)
        self.nyquist_limited = bool(nyquist_limited)

    def __repr__(self):
        return (f"ResolutionEstimate({self.resolution_um:.4g} um, f*={self.crossing_frequency:.4g}, "
                f"nyquist_limited={self.nyquist_limited})")


def _spectra(a, b):
    if a.shape != b.shape:
        raise ValidationError(f"FRC输入尺寸不一致: {a.shape} vs {b.shape}")
    if not np.any(a) or not np.any(b):
        raise ValidationError("FRC输入不能全为零")
    return np.fft.fft2(a), np.fft.fft2(b)


def _ring_statistics(fa, fb, partition):
    """各环的互相关实部与两幅图的能量"""
    cross = partition.ring_sums(fa.real * fb.real + fa.imag * fb.imag)
    power_a = partition.ring_sums(fa.real * fa.real + fa.imag * fa.imag)
    power_b = partition.ring_sums(fb.real * fb.real + fb.imag * fb.imag)
    floor_a = ENERGY_FLOOR * np.sum(np.abs(fa) ** 2)
    floor_b = ENERGY_FLOOR * np.sum(np.abs(fb) ** 2)
    defined = (power_a > floor_a) & (power_b > floor_b)
    defined[0] = False  # DC环不参与
    return cross, power_a, power_b, defined


def _curve_from_arrays(a, b, pixel_size_um=1.0, decimation=1):
    fa, fb = _spectra(a, b)
    partition = ring_partition(*a.shape)
    cross, power_a, power_b, defined = _ring_statistics(fa, fb, partition)
    values = np.full(partition.ring_count + 1, np.nan)
    values[defined] = cross[defined] / np.sqrt(power_a[defined] * power_b[defined])
    rings = np.arange(1, partition.ring_count + 1)
    frequencies = rings / float(min(a.shape))
    return FrcCurve(rings, frequencies, values[1:], defined[1:], partition.counts[1:],
                    pixel_size_um, decimation)


def frc_curve(a: ChannelImage, b: ChannelImage, pixel_size_um=1.0) -> FrcCurve:
    """
    两幅图像的傅里叶环相关

    Args:
        a: 第一幅图像
        b: 第二幅图像
        pixel_size_um: 源像素尺寸（微米）

    Returns:
        FrcCurve，能量为零的环记为无定义（NaN）
    """
    return _curve_from_arrays(a.pixels, b.pixels, pixel_size_um)


def split_diagonal(pixels):
    """按 (偶行,偶列) 与 (奇行,奇列) 拆分为两幅子图"""
    height, width = pixels.shape[0] // 2, pixels.shape[1] // 2
    return pixels[0:2 * height:2, 0:2 * width:2], pixels[1:2 * height:2, 1:2 * width:2]


def single_image_frc(image: ChannelImage, pixel_size_um=1.0) -> FrcCurve:
    """
    单图像FRC：对角相位子采样后的两幅子图之间的FRC，有效像素尺寸为原来的2倍

    Args:
        image: 输入图像
        pixel_size_um: 原始像素尺寸（微米）
    """
    if image.height < 8 or image.width < 8:
        raise ValidationError(f"单图像FRC需要至少8x8像素，实际: {image.height}x{image.width}")
    sub_a, sub_b = split_diagonal(image.pixels)
    if not np.any(sub_a) or not np.any(sub_b):
        raise UndefinedCurveError("子图全为零，FRC无定义")
    curve = _curve_from_arrays(sub_a, sub_b, pixel_size_um, decimation=2)
    if not np.any(curve.defined):
        raise UndefinedCurveError("单图像FRC所有环都无定义（常数图像？）")
    return curve


def resolution_from_curve(curve: FrcCurve, threshold=DEFAULT_THRESHOLD, pixel_size_um=None) -> ResolutionEstimate:
    """
    由首次向下穿越阈值的频率估计分辨率（相邻环线性插值）

    Args:
        curve: FRC曲线
        threshold: 相关阈值，默认1/7
        pixel_size_um: 原始像素尺寸，None时使用曲线记录的值

    Returns:
        ResolutionEstimate；未穿越时 resolution = 有效像素/0.5
    """
    if not 0 < threshold < 1:
        raise ValidationError(f"FRC阈值 ({threshold}) 必须在 (0,1) 内")
    if len(curve) == 0 or not np.any(curve.defined):
        raise UndefinedCurveError("FRC曲线为空或没有有定义的环")
    base = curve.pixel_size_um if pixel_size_um is None else float(pixel_size_um)
    effective = base * curve.decimation

    # 频率0处相关为1
    freqs = np.concatenate(([0.0], curve.frequencies[curve.defined]))
    values = np.concatenate(([1.0], curve.values[curve.defined]))
    for k in range(1, len(values)):
        if values[k - 1] >= threshold > values[k]:
            fraction = (values[k - 1] - threshold) / (values[k - 1] - values[k])
            crossing = freqs[k - 1] + fraction * (freqs[k] - freqs[k - 1])
            return ResolutionEstimate(effective / crossing, crossing, threshold, False)
    return ResolutionEstimate(effective / 0.5, 0.5, threshold, True)


def _loss_terms(pred, target, mode):
    fa, fb = _spectra(pred, target)
    partition = ring_partition(*pred.shape)
    cross, power_a, power_b, defined = _ring_statistics(fa, fb, partition)
    if not np.any(defined):
        raise UndefinedCurveError("FRC损失所有环都无定义")
    if mode == 'frc':
        weights = np.where(defined, 1.0 / np.count_nonzero(defined), 0.0)
    elif mode == 'frc-sum':
        weights = defined.astype(np.float64)
    else:
        raise ValidationError(f"未知的FRC损失模式: {mode}")
    frc_values = np.zeros_like(cross)
    frc_values[defined] = cross[defined] / np.sqrt(power_a[defined] * power_b[defined])
    return fa, fb, partition, power_a, power_b, defined, weights, frc_values


def frc_loss_array(pred, target, mode='frc'):
    """数组版FRC损失"""
    *_, weights, frc_values = _loss_terms(pred, target, mode)
    return 1.0 - float(np.sum(weights * frc_values))


def frc_loss_gradient_array(pred, target, mode='frc'):
    """
    数组版FRC损失解析梯度

    ∂FRC_r/∂x = Re(N·IDFT(Y·1_r))/√(P_r Q_r) − FRC_r·Re(N·IDFT(X·1_r))/P_r，
    其中 X、Y 为 pred、target 的频谱，P_r、Q_r 为环能量。
    """
    fa, fb, partition, power_a, power_b, defined, weights, frc_values = _loss_terms(pred, target, mode)
    ring_weight = np.zeros_like(power_a)
    ring_norm = np.ones_like(power_a)
    ring_frc = np.zeros_like(power_a)
    ring_weight[defined] = weights[defined]
    ring_norm[defined] = np.sqrt(power_a[defined] * power_b[defined])
    ring_frc[defined] = frc_values[defined] / power_a[defined]

    index = partition.index
    inside = index >= 0
    safe_index = np.where(inside, index, 0)
    w = np.where(inside, ring_weight[safe_index], 0.0)
    field = w * (fb / ring_norm[safe_index] - ring_frc[safe_index] * fa)
    # N·ifft2 为未归一化的逆变换
    grad_frc = np.real(np.fft.ifft2(field)) * field.size
    return -grad_frc


def frc_loss(pred: ChannelImage, target: ChannelImage, mode='frc'):
    """
    FRC损失

    Args:
        pred: 预测图像
        target: 目标图像
        mode: 'frc' 为 1 − 环均值（默认，范围[0,2]），'frc-sum' 为 1 − 逐环求和

    Returns:
        float
    """
    return frc_loss_array(pred.pixels, target.pixels, mode)


def frc_loss_gradient(pred: ChannelImage, target: ChannelImage, mode='frc'):
    """FRC损失对pred每个像素的解析梯度（与pred同形状的数组）"""
    return frc_loss_gradient_array(pred.pixels, target.pixels, mode)


def write_curve_csv(curve: FrcCurve, estimate: ResolutionEstimate, path):
    """
    写出FRC曲线CSV，分辨率估计作为注释行附加

    Args:
        curve: FRC曲线
        estimate: 分辨率估计
        path: 输出路径
    """
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['ring', 'freq_cycles_per_px', 'frc', 'n_samples'])
        for ring, freq, value, defined, count in zip(curve.rings, curve.frequencies, curve.values,
                                                    curve.defined, curve.counts):
            writer.writerow([int(ring), '%.17g' % freq, '%.17g' % value if defined else '', int(count)])
        f.write(f"# resolution_um={float(estimate.resolution_um)!r}\n")
        f.write(f"# threshold={float(estimate.threshold)!r}\n")
        f.write(f"# nyquist_limited={str(estimate.nyquist_limited).lower()}\n")
    logger.info(f"FRC曲线已写出: {path}")


def evaluate_cube_resolution(cube, threshold=DEFAULT_THRESHOLD, workers=1):
    """
    逐通道单图像FRC分辨率

    Args:
        cube: SpectralCube
        threshold: FRC阈值
        workers: 并行线程数

    Returns:
        (每通道ResolutionEstimate列表, 汇总字典)；无定义的通道记为None
    """
    def evaluate(index):
        try:
            curve = single_image_frc(cube.channels[index], cube.pixel_size_um)
            return resolution_from_curve(curve, threshold)
        except UndefinedCurveError:
            logger.warning(f"通道 {index} (m/z {cube.labels[index]}) FRC无定义，已跳过")
            return None

    with ThreadPoolExecutor(max_workers=workers) as executor:
        estimates = list(executor.map(evaluate, range(len(cube))))

    values = np.array([e.resolution_um for e in estimates if e is not None])
    summary = {
        'n': int(values.size),
        'mean_um': float(values.mean()) if values.size else float('nan'),
        'median_um': float(np.median(values)) if values.size else float('nan'),
        'nyquist_limited': int(sum(1 for e in estimates if e is not None and e.nyquist_limited)),
    }
    logger.info(f"立方体分辨率: 平均 {summary['mean_um']:.4g} um, 中位数 {summary['median_um']:.4g} um "
                f"({summary['n']} 个通道)")
    return estimates, summary
