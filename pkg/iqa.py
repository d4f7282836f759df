"""
图像质量评估模块
全参考指标（PSNR、SSIM）与无参考指标（BRISQUE特征与线性评分、PIQE、CRISQUE）
"""
import csv
import json
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import ndimage, special

from cube_io import ChannelImage, SpectralCube
from degradation import add_gaussian_noise
from errors import ModelFormatError, ValidationError
from fourier_core import convolve_periodic, gaussian_kernel
from noise import STREAM_CHANNEL_BASE
from phantoms import smooth_phantom


logger = logging.getLogger('HyReS.IQA')

MSCN_WINDOW = 7
MSCN_SIGMA = 7.0 / 6.0
MSCN_C = 1.0 / 255.0
FEATURES_PER_SCALE = 18
FEATURE_COUNT = 2 * FEATURES_PER_SCALE
MIN_NR_SIZE = 32

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2

PIQE_BLOCK = 16
PIQE_ACTIVITY = 0.1
PIQE_EDGE_SEGMENT = 6
PIQE_EDGE_THRESHOLD = 0.1
PIQE_NOISE_RATIO = 0.3
PIQE_CENTER = 8
PIQE_C = 1.0

# 矩匹配形状参数网格
SHAPE_GRID = np.arange(0.2, 10.0 + 5e-4, 0.001)
_RHO_GRID = special.gamma(2.0 / SHAPE_GRID) ** 2 / (special.gamma(1.0 / SHAPE_GRID) * special.gamma(3.0 / SHAPE_GRID))

DEFAULT_SHAPE = 2.0
PAIR_NAMES = ('h', 'v', 'd1', 'd2')


def _gaussian_window(size, sigma):
    offsets = np.arange(size) - size // 2
    weights = np.exp(-(offsets[:, None] ** 2 + offsets[None, :] ** 2) / (2.0 * sigma * sigma))
    return weights / weights.sum()


_MSCN_WEIGHTS = _gaussian_window(MSCN_WINDOW, MSCN_SIGMA)
_SSIM_WEIGHTS = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)


class NssFeatures:
    """36维自然场景统计特征"""
    __slots__ = ('values',)

    def __init__(self, values):
        array = np.array(values, dtype=np.float64, copy=True)
        if array.shape != (FEATURE_COUNT,):
            raise ValidationError(f"BRISQUE特征长度必须为 {FEATURE_COUNT}，实际: {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValidationError("BRISQUE特征包含NaN或Inf")
        if np.any(array[shape_indices()] <= 0):
            raise ValidationError("BRISQUE形状参数必须为正")
        array.setflags(write=False)
        self.values = array

    def __len__(self):
        return FEATURE_COUNT


def shape_indices():
    """形状参数在特征向量中的位置"""
    per_scale = [0] + [2 + 4 * k for k in range(4)]
    return np.array(per_scale + [FEATURES_PER_SCALE + i for i in per_scale])


@dataclass
class BrisqueModel:
    """线性BRISQUE评分模型：min-max归一化特征的线性组合，钳位到[0,100]"""
    weights: np.ndarray
    bias: float
    feature_min: np.ndarray
    feature_max: np.ndarray
    note: str = ''

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.feature_min = np.asarray(self.feature_min, dtype=np.float64)
        self.feature_max = np.asarray(self.feature_max, dtype=np.float64)
        for name in ('weights', 'feature_min', 'feature_max'):
            if getattr(self, name).shape != (FEATURE_COUNT,):
                raise ModelFormatError(f"BRISQUE模型 {name} 长度必须为 {FEATURE_COUNT}")
        if np.any(self.feature_min >= self.feature_max):
            raise ModelFormatError("BRISQUE模型每个特征的min必须小于max")
        self.bias = float(self.bias)

    @classmethod
    def load(cls, path):
        """从JSON文件加载模型"""
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
            return cls(data['weights'], data['bias'], data['feature_min'], data['feature_max'],
                       data.get('note', ''))
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise ModelFormatError(f"BRISQUE模型文件无效: {path} ({e})") from e

    def save(self, path):
        data = {
            'weights': self.weights.tolist(),
            'bias': self.bias,
            'feature_min': self.feature_min.tolist(),
            'feature_max': self.feature_max.tolist(),
            'note': self.note,
        }
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, ensure_ascii=False, indent=2)


@dataclass
class ChannelQuality:
    """单通道质量分数"""
    channel: int
    label: float
    brisque: float
    piqe: float
    crisque: float
    psnr: Optional[float] = None
    ssim: Optional[float] = None


@dataclass
class IqaReport:
    """立方体质量报告"""
    channels: List[ChannelQuality] = field(default_factory=list)

    def median(self, name):
        values = [getattr(c, name) for c in self.channels if getattr(c, name) is not None]
        values = [v for v in values if math.isfinite(v)]
        return float(np.median(values)) if values else float('nan')

    def summary(self):
        return {name: self.median(name) for name in ('brisque', 'piqe', 'crisque', 'psnr', 'ssim')}


def _check_same_shape(test, reference):
    if test.shape != reference.shape:
        raise ValidationError(f"图像尺寸不一致: {test.shape} vs {reference.shape}")


def psnr(test: ChannelImage, reference: ChannelImage):
    """
    峰值信噪比（峰值固定为1.0）

    Returns:
        dB；两幅图像完全相同时返回 +inf
    """
    _check_same_shape(test, reference)
    diff = test.pixels - reference.pixels
    mse = float(np.mean(diff * diff))
    if mse == 0:
        return float('inf')
    return 10.0 * math.log10(1.0 / mse)


def ssim(test: ChannelImage, reference: ChannelImage):
    """
    平均结构相似度：11x11高斯窗（σ=1.5），只统计完全落在图像内的窗口

    Returns:
        float ∈ [−1, 1]
    """
    _check_same_shape(test, reference)
    if test.height < SSIM_WINDOW or test.width < SSIM_WINDOW:
        raise ValidationError(f"SSIM需要至少 {SSIM_WINDOW}x{SSIM_WINDOW} 像素，实际: {test.shape}")
    x = test.pixels
    y = reference.pixels
    half = SSIM_WINDOW // 2

    def local_mean(values):
        filtered = ndimage.correlate(values, _SSIM_WEIGHTS, mode='reflect')
        return filtered[half:filtered.shape[0] - half, half:filtered.shape[1] - half]

    mu_x = local_mean(x)
    mu_y = local_mean(y)
    var_x = local_mean(x * x) - mu_x * mu_x
    var_y = local_mean(y * y) - mu_y * mu_y
    cov = local_mean(x * y) - mu_x * mu_y
    numerator = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    denominator = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(numerator / denominator))


def mscn(pixels):
    """
    均值减除对比度归一化系数

    先减去全局均值（MSCN对平移不变），常数图像因此得到精确的全零场。
    """
    centered = np.asarray(pixels, dtype=np.float64)
    centered = centered - centered.mean()
    mu = ndimage.correlate(centered, _MSCN_WEIGHTS, mode='reflect')
    second = ndimage.correlate(centered * centered, _MSCN_WEIGHTS, mode='reflect')
    sigma = np.sqrt(np.abs(second - mu * mu))
    return (centered - mu) / (sigma + MSCN_C)


def _shape_from_ratio(ratio):
    return float(SHAPE_GRID[np.argmin(np.abs(_RHO_GRID - ratio))])


def fit_ggd(values):
    """
    广义高斯矩匹配拟合

    Returns:
        (形状, 方差)；全零输入返回 (2.0, 0.0)
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    second = float(np.mean(x * x))
    if second == 0:
        return DEFAULT_SHAPE, 0.0
    ratio = float(np.mean(np.abs(x))) ** 2 / second
    return _shape_from_ratio(ratio), second


def fit_aggd(values):
    """
    非对称广义高斯矩匹配拟合

    Returns:
        (形状, 均值η, 左方差, 右方差)；全零输入返回 (2.0, 0, 0, 0)
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    second = float(np.mean(x * x))
    if second == 0:
        return DEFAULT_SHAPE, 0.0, 0.0, 0.0
    left = x[x < 0]
    right = x[x >= 0]
    left_var = float(np.mean(left * left)) if left.size else 0.0
    right_var = float(np.mean(right * right)) if right.size else 0.0
    r_hat = float(np.mean(np.abs(x))) ** 2 / second
    if left_var > 0 and right_var > 0:
        gamma = math.sqrt(left_var) / math.sqrt(right_var)
        r_big = r_hat * (gamma ** 3 + 1.0) * (gamma + 1.0) / (gamma ** 2 + 1.0) ** 2
    else:
        # 单侧分布时 γ→0 或 ∞，修正因子趋于1
        r_big = r_hat
    shape = _shape_from_ratio(r_big)
    scale = math.sqrt(special.gamma(1.0 / shape) / special.gamma(3.0 / shape))
    beta_left = math.sqrt(left_var) * scale
    beta_right = math.sqrt(right_var) * scale
    mean = (beta_right - beta_left) * special.gamma(2.0 / shape) / special.gamma(1.0 / shape)
    return shape, float(mean), left_var, right_var


def _pair_products(field):
    return (
        field[:, :-1] * field[:, 1:],
        field[:-1, :] * field[1:, :],
        field[:-1, :-1] * field[1:, 1:],
        field[1:, :-1] * field[:-1, 1:],
    )


def _scale_features(pixels):
    field = mscn(pixels)
    features = list(fit_ggd(field))
    for product in _pair_products(field):
        features.extend(fit_aggd(product))
    return features


def _half_scale(pixels):
    """2x2块平均后的二倍抽取（奇数边裁掉末行/列）"""
    height = pixels.shape[0] // 2 * 2
    width = pixels.shape[1] // 2 * 2
    cropped = pixels[:height, :width]
    return cropped.reshape(height // 2, 2, width // 2, 2).mean(axis=(1, 3))


def _check_nr_size(image):
    if image.height < MIN_NR_SIZE or image.width < MIN_NR_SIZE:
        raise ValidationError(f"无参考指标需要至少 {MIN_NR_SIZE}x{MIN_NR_SIZE} 像素，实际: {image.shape}")


def brisque_features(image: ChannelImage) -> NssFeatures:
    """
    两个尺度的BRISQUE特征

    每个尺度18维：MSCN场的(形状, 方差)，再加水平、垂直、两条对角方向两两乘积的AGGD参数各4个。
    """
    _check_nr_size(image)
    pixels = image.pixels
    return NssFeatures(_scale_features(pixels) + _scale_features(_half_scale(pixels)))


def brisque_score(features: NssFeatures, model: BrisqueModel):
    """线性评分，钳位到[0,100]，越低越好"""
    values = features.values if isinstance(features, NssFeatures) else np.asarray(features)
    normalized = (values - model.feature_min) / (model.feature_max - model.feature_min)
    score = float(np.dot(model.weights, normalized)) + model.bias
    return min(100.0, max(0.0, score))


def _block_distortion(block):
    """单个活跃块的失真分数"""
    last = PIQE_BLOCK - 1
    edges = (block[0, :], block[last, :], block[:, 0], block[:, last])
    for edge in edges:
        segments = np.lib.stride_tricks.sliding_window_view(edge, PIQE_EDGE_SEGMENT)
        if np.any(segments.std(axis=1, ddof=1) < PIQE_EDGE_THRESHOLD):
            return 1.0

    start = (PIQE_BLOCK - PIQE_CENTER) // 2
    center_mask = np.zeros(block.shape, dtype=bool)
    center_mask[start:start + PIQE_CENTER, start:start + PIQE_CENTER] = True
    sigma_center = float(np.std(block[center_mask], ddof=1))
    sigma_surround = float(np.std(block[~center_mask], ddof=1))
    largest = max(sigma_center, sigma_surround)
    if largest > 0 and abs(sigma_center - sigma_surround) / largest <= PIQE_NOISE_RATIO:
        return min(float(np.var(block, ddof=1)), 1.0)
    return 0.0


def piqe_score(image: ChannelImage):
    """
    PIQE分数 ∈ [0,100]，越低越好

    MSCN场分为16x16块，平均绝对值超过0.1的块为活跃块；
    score = 100·(Σ块失真 + 1)/(活跃块数 + 1)，常数图像为100。
    """
    _check_nr_size(image)
    field = mscn(image.pixels)
    rows = field.shape[0] // PIQE_BLOCK
    cols = field.shape[1] // PIQE_BLOCK
    distortion = 0.0
    active = 0
    for r in range(rows):
        for c in range(cols):
            block = field[r * PIQE_BLOCK:(r + 1) * PIQE_BLOCK, c * PIQE_BLOCK:(c + 1) * PIQE_BLOCK]
            if float(np.mean(np.abs(block))) > PIQE_ACTIVITY:
                active += 1
                distortion += _block_distortion(block)
    return 100.0 * (distortion + PIQE_C) / (active + PIQE_C)


def crisque(brisque, piqe):
    """
    组合无参考分数：(1 − H)×100，H为归一化BRISQUE与PIQE的调和平均，越高越好

    Args:
        brisque: BRISQUE分数 ∈ [0,100]
        piqe: PIQE分数 ∈ [0,100]
    """
    for name, value in (('BRISQUE', brisque), ('PIQE', piqe)):
        if not 0 <= value <= 100:
            raise ValidationError(f"{name}分数 ({value}) 超出有效范围 (0-100)")
    b = brisque / 100.0
    p = piqe / 100.0
    harmonic = 0.0 if b == 0 or p == 0 else 2.0 * b * p / (b + p)
    return (1.0 - harmonic) * 100.0


class IqaEvaluator:
    """立方体级质量评估（按通道并行）"""

    def __init__(self, model: BrisqueModel, workers=1, logger=None):
        self.model = model
        self.workers = workers
        self.logger = logger or logging.getLogger('HyReS.IQA')

    def evaluate_channel(self, index, image, label, reference=None):
        try:
            b = brisque_score(brisque_features(image), self.model)
            p = piqe_score(image)
            quality = ChannelQuality(index, label, b, p, crisque(b, p))
            if reference is not None:
                quality.psnr = psnr(image, reference)
                quality.ssim = ssim(image, reference)
            return quality
        except ValidationError as e:
            raise ValidationError(f"通道 {index} 质量评估失败: {e}") from e

    def evaluate(self, cube: SpectralCube, reference: Optional[SpectralCube] = None) -> IqaReport:
        """
        评估立方体每个通道

        Args:
            cube: 待评估立方体
            reference: 可选的同尺寸参考立方体（计算PSNR/SSIM）
        """
        if reference is not None and (len(reference) != len(cube) or
                                      (reference.height, reference.width) != (cube.height, cube.width)):
            raise ValidationError("参考立方体的通道数或尺寸与待评估立方体不一致")

        def task(index):
            ref = reference.channels[index] if reference is not None else None
            return self.evaluate_channel(index, cube.channels[index], cube.labels[index], ref)

        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            report = IqaReport(list(executor.map(task, range(len(cube)))))
        summary = report.summary()
        self.logger.info(f"质量评估完成: {len(cube)} 个通道, BRISQUE中位数 {summary['brisque']:.2f}, "
                         f"PIQE中位数 {summary['piqe']:.2f}, CRISQUE中位数 {summary['crisque']:.2f}")
        return report


def _cell(value):
    return '' if value is None else '%.17g' % value


def write_iqa_csv(report: IqaReport, path):
    """写出质量报告CSV，中位数作为注释行"""
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['channel', 'mz', 'brisque', 'piqe', 'crisque', 'psnr_db', 'ssim'])
        for c in report.channels:
            writer.writerow([c.channel, '%.17g' % c.label, _cell(c.brisque), _cell(c.piqe),
                             _cell(c.crisque), _cell(c.psnr), _cell(c.ssim)])
        for name, value in report.summary().items():
            f.write(f"# median_{name}={float(value)!r}\n")
    logger.info(f"质量报告已写出: {path}")


def default_feature_ranges():
    """随包模型使用的特征归一化范围"""
    per_scale_min = [0.2, 0.0]
    per_scale_max = [10.0, 2.0]
    for _ in PAIR_NAMES:
        per_scale_min += [0.2, -0.3, 0.0, 0.0]
        per_scale_max += [10.0, 0.5, 2.0, 2.0]
    return np.array(per_scale_min * 2), np.array(per_scale_max * 2)


# 退化阶梯：(噪声σ, 模糊σ) 与对应目标分数
LADDER = ((0.0, 0.0), (0.01, 0.0), (0.02, 0.5), (0.05, 1.0), (0.1, 1.5), (0.2, 2.0))


def fit_brisque_model(seed=0, size=64, phantoms_per_level=8, ridge=1e-3):
    """
    在合成退化阶梯上用岭回归最小二乘拟合线性BRISQUE模型

    目标分数随退化级别从0线性增加到100。

    Args:
        seed: 随机种子
        size: 体模边长
        phantoms_per_level: 每个级别的体模数量
        ridge: 岭正则化系数

    Returns:
        BrisqueModel
    """
    rows, targets = [], []
    for level, (noise_sigma, blur_sigma) in enumerate(LADDER):
        target = 100.0 * level / (len(LADDER) - 1)
        for k in range(phantoms_per_level):
            image = smooth_phantom(size, seed, index=k)
            if blur_sigma > 0:
                image = convolve_periodic(image, gaussian_kernel(blur_sigma))
            image = add_gaussian_noise(image, noise_sigma, seed, include_background=True,
                                       stream=STREAM_CHANNEL_BASE + level * phantoms_per_level + k)
            rows.append(brisque_features(image).values)
            targets.append(target)

    features = np.array(rows)
    feature_min = features.min(axis=0)
    feature_max = features.max(axis=0)
    span = np.where(feature_max - feature_min > 0, feature_max - feature_min, 1.0)
    feature_min = feature_min - 0.05 * span
    feature_max = feature_min + 1.1 * span
    normalized = (features - feature_min) / (feature_max - feature_min)

    design = np.column_stack((normalized, np.ones(len(normalized))))
    penalty = ridge * np.eye(design.shape[1])
    penalty[-1, -1] = 0.0
    coeffs = np.linalg.solve(design.T @ design + penalty, design.T @ np.array(targets))
    model = BrisqueModel(coeffs[:-1], coeffs[-1], feature_min, feature_max,
                         note=f"fit-brisque: seed={seed}, size={size}, levels={len(LADDER)}, ridge={ridge}")
    logger.info(f"BRISQUE模型拟合完成: {len(targets)} 个样本")
    return model
