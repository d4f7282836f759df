"""
复原模块
最小化的FRC损失训练复原器：双三次上采样 + 可学习的反卷积核，Adam优化，可选的逻辑回归判别器
"""
import csv
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from tqdm import tqdm

from cube_io import ChannelImage, SpectralCube
from degradation import PairSet, bicubic_resize_array
from errors import ModelFormatError, TrainingError, UndefinedCurveError, ValidationError
from fourier_core import Kernel, convolve_periodic_array, kernel_gradient
from frc import frc_loss_array, frc_loss_gradient_array
from noise import STREAM_DISCRIMINATOR, STREAM_SHUFFLE, make_rng


logger = logging.getLogger('HyReS.Trainer')

MODEL_FORMAT = 'hyres-model/1'
ADAM_EPSILON = 1e-8
# 判别器特征的块边长
BLOCK = 8


@dataclass(frozen=True)
class TrainingConfig:
    """训练参数"""
    epochs: int = 100
    batch_size: int = 8
    patch_size: int = 50
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    alpha_frc: float = 1.0
    beta_pixel: float = 0.1
    adv_weight: float = 0.0
    kernel_size: int = 9
    loss_mode: str = 'frc'
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError(f"训练轮数 ({self.epochs}) 不能为负")
        if self.batch_size < 1:
            raise ValidationError(f"批大小 ({self.batch_size}) 必须为正整数")
        if self.patch_size < 16:
            raise ValidationError(f"图块边长 ({self.patch_size}) 不能小于16")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValidationError(f"卷积核边长 ({self.kernel_size}) 必须为正奇数")
        if self.loss_mode not in ('frc', 'frc-sum'):
            raise ValidationError(f"损失模式 ({self.loss_mode}) 无效")
        if not self.learning_rate > 0:
            raise ValidationError(f"学习率 ({self.learning_rate}) 必须为正数")
        for name in ('adam_beta1', 'adam_beta2'):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValidationError(f"Adam 参数 {name} ({value}) 必须位于 [0, 1) 区间")

    @classmethod
    def from_settings(cls, settings, seed=0):
        """由ConfigManager.settings构造"""
        keys = ('epochs', 'batch_size', 'patch_size', 'learning_rate', 'adam_beta1', 'adam_beta2',
                'alpha_frc', 'beta_pixel', 'adv_weight', 'kernel_size', 'loss_mode')
        return cls(seed=seed, **{key: settings[key] for key in keys})


@dataclass
class RestorerModel:
    """复原模型：缩放倍数、反卷积核与训练记录"""
    scale: int
    kernel: Kernel
    seed: int = 0
    final_loss: float = float('nan')
    epoch_losses: list = field(default_factory=list)
    config: TrainingConfig = None

    @property
    def kernel_size(self):
        return self.kernel.size


class _Adam:
    """Adam优化器状态"""

    def __init__(self, shape, learning_rate, beta1, beta2):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPSILON)


def _sigmoid(z):
    return 0.5 * (1.0 + math.tanh(0.5 * z))


class PatchDiscriminator:
    """逻辑回归判别器：D(x) = sigmoid(w·(8x8块均值) + b)，交叉熵训练"""

    def __init__(self, patch_side, config: TrainingConfig):
        self.rows = patch_side // BLOCK
        if self.rows < 1:
            raise ValidationError(f"图块边长 {patch_side} 小于判别器块边长 {BLOCK}")
        rng = make_rng(config.seed, STREAM_DISCRIMINATOR)
        self.weights = rng.normal(0.0, 0.01, size=(self.rows, self.rows))
        self.bias = 0.0
        self.optimizer = _Adam((self.rows * self.rows + 1,), config.learning_rate,
                               config.adam_beta1, config.adam_beta2)

    def features(self, pixels):
        side = self.rows * BLOCK
        blocks = pixels[:side, :side].reshape(self.rows, BLOCK, self.rows, BLOCK)
        return blocks.mean(axis=(1, 3))

    def probability(self, pixels):
        return _sigmoid(float(np.sum(self.weights * self.features(pixels))) + self.bias)

    def generator_terms(self, pixels):
        """生成器对抗损失 −log D(pred) 及其对像素的梯度"""
        d = self.probability(pixels)
        loss = -math.log(max(d, 1e-300))
        grad = np.zeros_like(pixels)
        side = self.rows * BLOCK
        per_block = -(1.0 - d) * self.weights / (BLOCK * BLOCK)
        grad[:side, :side] = np.kron(per_block, np.ones((BLOCK, BLOCK)))
        return loss, grad

    def update(self, real, fake):
        """用一批真实/生成图块做一次交叉熵梯度更新，返回判别器损失"""
        grad_w = np.zeros_like(self.weights)
        grad_b = 0.0
        loss = 0.0
        for pixels, target in [(p, 1.0) for p in real] + [(p, 0.0) for p in fake]:
            features = self.features(pixels)
            d = _sigmoid(float(np.sum(self.weights * features)) + self.bias)
            loss -= math.log(max(d if target else 1.0 - d, 1e-300))
            grad_w += (d - target) * features
            grad_b += d - target
        count = len(real) + len(fake)
        params = np.append(self.weights.ravel(), self.bias)
        grad = np.append(grad_w.ravel(), grad_b) / count
        params = self.optimizer.step(params, grad)
        self.weights = params[:-1].reshape(self.rows, self.rows)
        self.bias = float(params[-1])
        return loss / count


class RestorerTrainer:
    """复原器训练器"""

    def __init__(self, config: TrainingConfig, logger=None):
        self.config = config
        self.logger = logger or logging.getLogger('HyReS.Trainer')

    def adversarial_weight(self, epoch):
        """对抗项权重从0线性增长到 adv_weight"""
        if self.config.adv_weight == 0:
            return 0.0
        return self.config.adv_weight * epoch / max(1, self.config.epochs - 1)

    def _patch_terms(self, upsampled, target, weights, adv_weight, discriminator):
        cfg = self.config
        pred = convolve_periodic_array(upsampled, weights)
        upstream = np.zeros_like(pred)

        loss_frc = 0.0
        if cfg.alpha_frc > 0:
            try:
                loss_frc = frc_loss_array(pred, target, cfg.loss_mode)
                upstream += cfg.alpha_frc * frc_loss_gradient_array(pred, target, cfg.loss_mode)
            except (UndefinedCurveError, ValidationError):
                # 全零或常数图块没有FRC
                loss_frc = 0.0

        diff = pred - target
        loss_pixel = float(np.mean(np.abs(diff)))
        upstream += cfg.beta_pixel * np.sign(diff) / diff.size

        loss_adv = 0.0
        if adv_weight > 0:
            loss_adv, grad_adv = discriminator.generator_terms(pred)
            upstream += adv_weight * grad_adv

        total = cfg.alpha_frc * loss_frc + cfg.beta_pixel * loss_pixel + adv_weight * loss_adv
        grad = kernel_gradient(upsampled, upstream, weights.shape[0])
        return pred, np.array([total, loss_frc, loss_pixel, loss_adv]), grad

    def train(self, pairs: PairSet, show_progress=False) -> RestorerModel:
        """
        训练反卷积核

        Args:
            pairs: 训练图块对
            show_progress: 是否显示tqdm进度条

        Returns:
            RestorerModel
        """
        cfg = self.config
        if len(pairs) == 0:
            raise ValidationError("训练图块对为空")
        size = cfg.kernel_size
        side = pairs.hr.shape[1]
        if size > side:
            raise ValidationError(f"卷积核边长 {size} 超过HR图块边长 {side}")

        weights = Kernel.delta(size).weights.copy()
        upsampled = np.stack([bicubic_resize_array(p, pairs.scale, 'up') for p in pairs.lr])
        optimizer = _Adam(weights.shape, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
        discriminator = PatchDiscriminator(side, cfg) if cfg.adv_weight > 0 else None
        shuffle = make_rng(cfg.seed, STREAM_SHUFFLE)

        epoch_losses = []
        epochs = tqdm(range(cfg.epochs), desc='训练', disable=not show_progress)
        for epoch in epochs:
            adv_weight = self.adversarial_weight(epoch)
            order = shuffle.permutation(len(pairs))
            batch_losses = []
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                grad_sum = np.zeros_like(weights)
                loss_sum = np.zeros(4)
                fakes = []
                for i in batch:
                    pred, losses, grad = self._patch_terms(upsampled[i], pairs.hr[i], weights,
                                                           adv_weight, discriminator)
                    grad_sum += grad
                    loss_sum += losses
                    fakes.append(pred)
                losses = loss_sum / len(batch)
                if not np.all(np.isfinite(losses)) or not np.all(np.isfinite(grad_sum)):
                    raise TrainingError(f"第 {epoch + 1} 轮出现非有限损失 {losses.tolist()}，"
                                        f"请降低学习率 (当前 {cfg.learning_rate})")
                weights = optimizer.step(weights, grad_sum / len(batch))
                if discriminator is not None and adv_weight > 0:
                    discriminator.update([pairs.hr[i] for i in batch], fakes)
                batch_losses.append(losses)
            epoch_mean = np.mean(batch_losses, axis=0)
            epoch_losses.append(tuple(float(v) for v in epoch_mean))
            self.logger.debug(f"第 {epoch + 1}/{cfg.epochs} 轮: 总损失 {epoch_mean[0]:.6g}, "
                              f"FRC {epoch_mean[1]:.6g}, 像素 {epoch_mean[2]:.6g}, 对抗 {epoch_mean[3]:.6g}")

        final_loss = epoch_losses[-1][0] if epoch_losses else float('nan')
        if epoch_losses:
            self.logger.info(f"训练完成: {cfg.epochs} 轮, 损失 {epoch_losses[0][0]:.6g} -> {final_loss:.6g}")
        else:
            self.logger.info("训练轮数为0，返回单位冲激核")
        return RestorerModel(pairs.scale, Kernel(weights), cfg.seed, final_loss, epoch_losses, cfg)


def train_restorer(pairs: PairSet, config: TrainingConfig, show_progress=False) -> RestorerModel:
    """训练复原器"""
    return RestorerTrainer(config).train(pairs, show_progress)


def restore_channel(model: RestorerModel, image: ChannelImage) -> ChannelImage:
    """单通道复原：上采样、反卷积、钳位到[0,1]"""
    upsampled = bicubic_resize_array(image.pixels, model.scale, 'up')
    return ChannelImage(np.clip(convolve_periodic_array(upsampled, model.kernel), 0.0, 1.0))


def apply_restorer(model: RestorerModel, lr: SpectralCube, workers=1) -> SpectralCube:
    """
    对整个LR立方体做复原

    Args:
        model: 复原模型
        lr: 低分辨率立方体
        workers: 并行线程数

    Returns:
        SpectralCube，尺寸为s倍、像素尺寸除以s
    """
    with ThreadPoolExecutor(max_workers=workers) as executor:
        channels = list(executor.map(lambda ch: restore_channel(model, ch), lr.channels))
    restored = lr.replace(channels=channels, pixel_size_um=lr.pixel_size_um / model.scale)
    logger.info(f"复原完成: {len(lr)} 个通道, {lr.height}x{lr.width} -> {restored.height}x{restored.width}, "
                f"像素 {lr.pixel_size_um:g} -> {restored.pixel_size_um:g} um")
    return restored


def write_model(model: RestorerModel, path):
    """写出文本模型文件（17位有效数字）"""
    values = ','.join('%.17g' % v for v in model.kernel.weights.ravel())
    lines = [
        f"format = {MODEL_FORMAT}",
        f"scale = {model.scale}",
        f"kernel_size = {model.kernel_size}",
        f"seed = {model.seed}",
        f"final_loss = {'%.17g' % model.final_loss}",
        f"kernel = {values}",
    ]
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write('\n'.join(lines) + '\n')
    logger.info(f"模型已保存: {path}")


def read_model(path) -> RestorerModel:
    """
    读取文本模型文件

    Raises:
        ModelFormatError: 格式标识、字段缺失或核长度不符
    """
    entries = {}
    with open(path, 'r', encoding='utf-8') as f:
        for number, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            key, sep, value = line.partition('=')
            if not sep:
                raise ModelFormatError(f"{path} 第 {number} 行格式错误: {line[:40]}")
            entries[key.strip()] = value.strip()

    if entries.get('format') != MODEL_FORMAT:
        raise ModelFormatError(f"{path} 不是 {MODEL_FORMAT} 模型文件")
    try:
        scale = int(entries['scale'])
        size = int(entries['kernel_size'])
        seed = int(entries['seed'])
        final_loss = float(entries['final_loss'])
        values = [float(v) for v in entries['kernel'].split(',')]
    except (KeyError, ValueError) as e:
        raise ModelFormatError(f"{path} 模型字段缺失或无效: {e}") from e
    if len(values) != size * size:
        raise ModelFormatError(f"{path} 卷积核长度 {len(values)} 与边长 {size} 不符")
    try:
        kernel = Kernel(np.array(values).reshape(size, size))
    except ValidationError as e:
        raise ModelFormatError(f"{path} 卷积核无效: {e}") from e
    return RestorerModel(scale, kernel, seed, final_loss)


def write_loss_trace(model: RestorerModel, path):
    """写出每轮损失CSV"""
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['epoch', 'loss_total', 'loss_frc', 'loss_pixel', 'loss_adv'])
        for epoch, losses in enumerate(model.epoch_losses, 1):
            writer.writerow([epoch] + ['%.17g' % v for v in losses])


def describe_model(model: RestorerModel):
    """模型摘要字典（写入运行清单）"""
    summary = {'scale': model.scale, 'kernel_size': model.kernel_size, 'seed': model.seed,
               'final_loss': model.final_loss}
    if model.config is not None:
        summary['config'] = asdict(model.config)
    return summary
