"""
分析指标模块
Dice重叠系数、Spearman秩相关、ROC-AUC与平衡准确率，以及通道选择与平均谱一致性
"""
import csv
import math
import logging

import numpy as np
from scipy.stats import rankdata

from cube_io import SpectralCube, read_pgm
from errors import ValidationError


logger = logging.getLogger('HyReS.Metrics')

UNCLUSTERED = -1


class LabelMask:
    """逐像素整数类别标签，−1 表示未聚类"""
    __slots__ = ('height', 'width', 'labels')

    def __init__(self, labels):
        array = np.array(labels, dtype=np.int64, copy=True)
        if array.ndim != 2:
            raise ValidationError(f"标签掩码必须是二维数组，实际维度: {array.ndim}")
        array.setflags(write=False)
        self.height, self.width = array.shape
        self.labels = array

    @property
    def shape(self):
        return self.height, self.width

    def classes(self):
        """出现的类别（不含−1）"""
        return [int(c) for c in np.unique(self.labels) if c != UNCLUSTERED]


class ScoredLabels:
    """等长的实数分数与二值标签"""
    __slots__ = ('scores', 'labels')

    def __init__(self, scores, labels):
        scores = np.asarray(scores, dtype=np.float64).ravel()
        labels = np.asarray(labels).ravel()
        if scores.size != labels.size:
            raise ValidationError(f"分数与标签长度不一致: {scores.size} vs {labels.size}")
        if scores.size < 2:
            raise ValidationError("至少需要2个样本")
        if not np.all(np.isin(labels, (0, 1))):
            raise ValidationError("标签必须为0或1")
        if not np.all(np.isfinite(scores)):
            raise ValidationError("分数包含NaN或Inf")
        self.scores = scores
        self.labels = labels.astype(bool)

    @property
    def positives(self):
        return int(np.count_nonzero(self.labels))

    @property
    def negatives(self):
        return int(self.labels.size - self.positives)


def dice(a: LabelMask, b: LabelMask, class_id):
    """
    单类Dice系数 2|A∩B|/(|A|+|B|)

    Returns:
        float ∈ [0,1]；两集合都为空时为1
    """
    if a.shape != b.shape:
        raise ValidationError(f"掩码尺寸不一致: {a.shape} vs {b.shape}")
    in_a = a.labels == class_id
    in_b = b.labels == class_id
    total = int(np.count_nonzero(in_a)) + int(np.count_nonzero(in_b))
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(in_a & in_b)) / total


def dice_mean(a: LabelMask, b: LabelMask):
    """
    多类平均Dice：对两幅掩码共有的类别（排除未聚类−1）取平均

    Returns:
        (平均值, {类别: Dice})
    """
    if a.shape != b.shape:
        raise ValidationError(f"掩码尺寸不一致: {a.shape} vs {b.shape}")
    classes = sorted(set(a.classes()) & set(b.classes()))
    if not classes:
        raise ValidationError("两幅掩码没有共同的已聚类类别")
    scores = {c: dice(a, b, c) for c in classes}
    return float(np.mean(list(scores.values()))), scores


def spearman(x, y):
    """
    Spearman秩相关（平均秩处理并列）

    Args:
        x: 实数序列
        y: 等长实数序列
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValidationError(f"序列长度不一致: {x.size} vs {y.size}")
    if x.size < 3:
        raise ValidationError(f"Spearman相关至少需要3个样本，实际: {x.size}")
    rx = rankdata(x)
    ry = rankdata(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0 or syy == 0:
        raise ValidationError("秩序列方差为零，Spearman相关无定义")
    return float(np.dot(dx, dy)) / math.sqrt(sxx * syy)


def roc_auc(data: ScoredLabels):
    """
    ROC曲线下面积（Mann–Whitney形式，并列计1/2）

    Returns:
        float ∈ [0,1]
    """
    positives, negatives = data.positives, data.negatives
    if positives == 0 or negatives == 0:
        raise ValidationError("ROC-AUC需要同时包含正负两类样本")
    ranks = rankdata(data.scores)
    rank_sum = float(np.sum(ranks[data.labels]))
    return (rank_sum - positives * (positives + 1) / 2.0) / (positives * negatives)


def roc_curve(data: ScoredLabels):
    """
    ROC工作点：从(0,0)到(1,1)，每个不同阈值一个点（并列分数合并为一步）

    Returns:
        (假阳性率数组, 真阳性率数组)
    """
    positives, negatives = data.positives, data.negatives
    if positives == 0 or negatives == 0:
        raise ValidationError("ROC曲线需要同时包含正负两类样本")
    order = np.argsort(-data.scores, kind='stable')
    scores = data.scores[order]
    labels = data.labels[order]
    # 每组并列分数的最后一个位置
    ends = np.append(np.nonzero(np.diff(scores))[0], scores.size - 1)
    tp = np.cumsum(labels)[ends]
    fp = np.cumsum(~labels)[ends]
    fpr = np.concatenate(([0.0], fp / negatives))
    tpr = np.concatenate(([0.0], tp / positives))
    return fpr, tpr


def confusion_rates(predicted, actual):
    """
    由二值预测计算灵敏度与特异度

    Returns:
        (sensitivity, specificity)
    """
    predicted = np.asarray(predicted).astype(bool).ravel()
    actual = np.asarray(actual).astype(bool).ravel()
    if predicted.size != actual.size:
        raise ValidationError(f"预测与真值长度不一致: {predicted.size} vs {actual.size}")
    positives = int(np.count_nonzero(actual))
    negatives = actual.size - positives
    if positives == 0 or negatives == 0:
        raise ValidationError("灵敏度/特异度需要同时包含正负两类样本")
    sensitivity = int(np.count_nonzero(predicted & actual)) / positives
    specificity = int(np.count_nonzero(~predicted & ~actual)) / negatives
    return sensitivity, specificity


def balanced_accuracy(sensitivity, specificity):
    """灵敏度与特异度的算术平均"""
    for name, value in (('灵敏度', sensitivity), ('特异度', specificity)):
        if not 0 <= value <= 1:
            raise ValidationError(f"{name} ({value}) 超出有效范围 (0-1)")
    return (sensitivity + specificity) / 2.0


def select_top_intensity(cube: SpectralCube, n):
    """
    选取总强度最高的n个通道（结果保持m/z顺序）

    Returns:
        (子立方体, 选中的通道索引)
    """
    if n < 1:
        raise ValidationError(f"选取通道数 ({n}) 必须为正整数")
    totals = np.array([float(np.sum(ch.pixels)) for ch in cube.channels])
    order = np.argsort(-totals, kind='stable')
    indices = sorted(int(i) for i in order[:n])
    if n < len(cube):
        logger.info(f"按总强度选取 {len(indices)}/{len(cube)} 个通道")
    return cube.select(indices), indices


def mean_spectrum(cube: SpectralCube):
    """每个通道的平均强度"""
    return np.array([float(np.mean(ch.pixels)) for ch in cube.channels])


def spectrum_agreement(a: SpectralCube, b: SpectralCube):
    """两个立方体平均谱的Spearman秩相关（要求m/z标签一致）"""
    if a.labels != b.labels:
        raise ValidationError("两个立方体的m/z标签不一致")
    return spearman(mean_spectrum(a), mean_spectrum(b))


def read_label_mask(path) -> LabelMask:
    """读取PGM标签掩码：标签 = 像素值 − 1（像素0为未聚类）"""
    array, _ = read_pgm(path)
    return LabelMask(array.astype(np.int64) - 1)


def read_scored_labels(path) -> ScoredLabels:
    """读取 score,label 两列CSV（首行为表头）；格式错误时报出所在行号"""
    with open(path, 'r', encoding='utf-8', newline='') as f:
        numbered = [(number, line) for number, line in enumerate(f, 1) if not line.startswith('#')]
    scores, labels = [], []
    for number, line in numbered[1:]:
        row = next(csv.reader([line]), [])
        if not row:
            continue
        if len(row) < 2:
            raise ValidationError(f"{path} 第{number}行: 需要 score,label 两列，实际 {len(row)} 列")
        try:
            scores.append(float(row[0]))
            labels.append(int(row[1]))
        except ValueError:
            raise ValidationError(f"{path} 第{number}行: 无法解析 {row[0]!r},{row[1]!r}") from None
    return ScoredLabels(scores, labels)


def write_metrics_csv(rows, path):
    """
    写出指标CSV

    Args:
        rows: (指标名, 值, 样本数) 序列
        path: 输出路径
    """
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['metric', 'value', 'n'])
        for name, value, count in rows:
            writer.writerow([name, '%.17g' % value, count])
    logger.info(f"指标已写出: {path}")
