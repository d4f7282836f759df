"""
配置管理模块
负责配置文件的加载、保存和验证
"""
import os
import configparser
import logging
from path_utils import get_config_path, get_models_dir


# 每个配置项所属的分区
SECTIONS = {
    'Degradation': ('scale', 'noise_sigma', 'noisy_fraction', 'snr_tau', 'blur_sigma'),
    'Training': ('epochs', 'batch_size', 'patch_size', 'learning_rate', 'adam_beta1',
                 'adam_beta2', 'alpha_frc', 'beta_pixel', 'adv_weight', 'kernel_size',
                 'loss_mode'),
    'Evaluation': ('frc_threshold', 'psf_epsilon', 'psf_sigma_tol', 'workers', 'top_channels'),
    'Paths': ('brisque_model',),
}


class ConfigManager:
    """配置管理器"""

    def __init__(self, config_path=None):
        """
        初始化配置管理器

        Args:
            config_path: 配置文件路径，如果为None则使用默认路径
        """
        self.config = configparser.ConfigParser()
        if config_path is None:
            self.config_path = get_config_path()
        else:
            self.config_path = config_path

        self.logger = logging.getLogger('HyReS.ConfigManager')

        # 默认配置
        self.defaults = {
            # 退化流程
            'scale': 4,
            'noise_sigma': 0.02,
            'noisy_fraction': 0.2,
            'snr_tau': 1e-6,
            'blur_sigma': 0.0,
            # 训练
            'epochs': 100,
            'batch_size': 8,
            'patch_size': 50,  # LR图块边长
            'learning_rate': 1e-3,
            'adam_beta1': 0.9,
            'adam_beta2': 0.999,
            'alpha_frc': 1.0,
            'beta_pixel': 0.1,
            'adv_weight': 0.0,  # 对抗项权重，0表示关闭判别器
            'kernel_size': 9,
            'loss_mode': 'frc',  # frc（环均值）或 frc-sum（逐环求和）
            # 评估
            'frc_threshold': 1.0 / 7.0,
            'psf_epsilon': 1e-6,
            'psf_sigma_tol': 1e-4,
            'workers': 4,
            'top_channels': 300,
            # 路径
            'brisque_model': '',
        }

        self.int_keys = {'scale', 'epochs', 'batch_size', 'patch_size', 'kernel_size',
                         'workers', 'top_channels'}
        self.str_keys = {'loss_mode', 'brisque_model'}

        self.settings = {}

    def load(self):
        """加载配置文件"""
        if os.path.exists(self.config_path):
            try:
                self.config.read(self.config_path, encoding='utf-8')
                self.logger.info(f"配置文件加载成功: {self.config_path}")
            except configparser.Error as e:
                self.logger.error(f"加载配置文件失败: {e}")
                self.config = configparser.ConfigParser()
                self._create_default_config()
        else:
            self.logger.info("配置文件不存在，使用默认配置")
            self._create_default_config()

        self._load_settings()

        errors = self.validate()
        if errors:
            self.logger.warning(f"配置验证发现问题: {errors}")
            self.save()  # 保存修复后的配置

    def _load_settings(self):
        """按类型读取所有配置项，无法解析的值回退到默认值"""
        for section, keys in SECTIONS.items():
            for key in keys:
                fallback = self.defaults[key]
                try:
                    if key in self.int_keys:
                        value = self.config.getint(section, key, fallback=fallback)
                    elif key in self.str_keys:
                        value = self.config.get(section, key, fallback=fallback).strip()
                    else:
                        value = self.config.getfloat(section, key, fallback=fallback)
                except ValueError:
                    self.logger.warning(f"配置项 [{section}] {key} 无法解析，使用默认值 {fallback}")
                    value = fallback
                self.settings[key] = value

    def save(self):
        """保存配置文件"""
        for section, keys in SECTIONS.items():
            if not self.config.has_section(section):
                self.config.add_section(section)
            for key in keys:
                value = self.settings.get(key, self.defaults[key])
                self.config.set(section, key, repr(value) if isinstance(value, float) else str(value))

        try:
            with open(self.config_path, 'w', encoding='utf-8') as configfile:
                self.config.write(configfile)
            self.logger.info("配置已保存")
        except OSError as e:
            self.logger.error(f"保存配置失败: {e}")

    def _create_default_config(self):
        """创建默认配置"""
        self.settings = dict(self.defaults)
        self.save()

    def validate(self):
        """验证配置的有效性，返回错误列表"""
        errors = []

        def check(key, ok, message):
            if not ok(self.settings.get(key, self.defaults[key])):
                errors.append(message.format(value=self.settings.get(key)))
                self.settings[key] = self.defaults[key]

        check('scale', lambda v: v >= 2, "缩放倍数 ({value}) 必须不小于2")
        check('noise_sigma', lambda v: v >= 0, "噪声标准差 ({value}) 不能为负")
        check('noisy_fraction', lambda v: 0 <= v <= 1, "加噪通道比例 ({value}) 超出有效范围 (0-1)")
        check('snr_tau', lambda v: v >= 0, "SNR阈值 ({value}) 不能为负")
        check('blur_sigma', lambda v: v >= 0, "模糊标准差 ({value}) 不能为负")

        check('epochs', lambda v: v >= 0, "训练轮数 ({value}) 不能为负")
        check('batch_size', lambda v: v >= 1, "批大小 ({value}) 必须为正整数")
        check('patch_size', lambda v: v >= 16, "图块边长 ({value}) 不能小于16")
        check('learning_rate', lambda v: v > 0, "学习率 ({value}) 必须为正数")
        check('adam_beta1', lambda v: 0 <= v < 1, "Adam β1 ({value}) 必须位于 [0, 1) 区间")
        check('adam_beta2', lambda v: 0 <= v < 1, "Adam β2 ({value}) 必须位于 [0, 1) 区间")
        check('alpha_frc', lambda v: v >= 0, "FRC损失权重 ({value}) 不能为负")
        check('beta_pixel', lambda v: v >= 0, "像素损失权重 ({value}) 不能为负")
        check('adv_weight', lambda v: v >= 0, "对抗损失权重 ({value}) 不能为负")
        check('kernel_size', lambda v: v >= 1 and v % 2 == 1, "卷积核边长 ({value}) 必须为正奇数")
        check('loss_mode', lambda v: v in ('frc', 'frc-sum'), "损失模式 ({value}) 无效")

        check('frc_threshold', lambda v: 0 < v < 1, "FRC阈值 ({value}) 超出有效范围 (0-1)")
        check('psf_epsilon', lambda v: v > 0, "PSF正则化系数 ({value}) 必须为正数")
        check('psf_sigma_tol', lambda v: v > 0, "高斯拟合容差 ({value}) 必须为正数")
        check('workers', lambda v: v >= 1, "并行线程数 ({value}) 必须为正整数")
        check('top_channels', lambda v: v >= 1, "评估通道数 ({value}) 必须为正整数")

        model_path = self.settings.get('brisque_model', '')
        if model_path and not os.path.isfile(model_path):
            errors.append(f"BRISQUE模型文件不存在: {model_path}，已改用随包模型")
            self.settings['brisque_model'] = ''

        return errors

    def brisque_model_path(self):
        """获取BRISQUE模型路径（未配置时使用随包模型）"""
        path = self.settings.get('brisque_model') or ''
        return path or os.path.join(get_models_dir(), 'brisque_linear.json')

    def get(self, key, default=None):
        """获取配置项"""
        return self.settings.get(key, default if default is not None else self.defaults.get(key))

    def set(self, key, value):
        """设置配置项"""
        self.settings[key] = value

    def get_all(self):
        """获取所有配置"""
        return self.settings.copy()
