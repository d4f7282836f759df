"""
运行清单模块
负责每次运行的RunManifest序列化，以及运行历史记录的保存和管理
"""
import os
import json
import datetime
import logging
from dataclasses import dataclass, field, asdict

from errors import ValidationError
from path_utils import get_history_dir, manifest_path_for


MAX_RECORDS = 100
VOLATILE_FIELDS = ('timestamp', 'duration_s')


@dataclass
class RunManifest:
    """
    一次运行的完整描述：子命令、解析后的参数、种子、输入输出路径、版本与耗时

    输入输出记录为绝对路径。timestamp 与 duration_s 每次运行都会变化，
    重放比较只使用 reproducible_dict()，不比较清单文件的原始字节。
    """
    subcommand: str
    argv: list
    parameters: dict
    seed: int
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    tool_version: str = ''
    duration_s: float = 0.0
    timestamp: str = ''

    def to_json(self):
        return json.dumps(asdict(self), ensure_ascii=False, indent=2, sort_keys=True)

    def reproducible_dict(self):
        """去掉随运行变化的字段（时间戳、耗时）后的清单内容"""
        data = asdict(self)
        for key in VOLATILE_FIELDS:
            data.pop(key)
        return data

    def save(self, primary_output):
        """写到 <主输出>.manifest.json，返回清单路径"""
        path = manifest_path_for(primary_output)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(self.to_json() + '\n')
        return path

    @classmethod
    def load(cls, path):
        """读取清单文件"""
        with open(path, 'r', encoding='utf-8') as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ValidationError(f"运行清单格式错误: {path} ({e})") from e
        try:
            return cls(**data)
        except TypeError as e:
            raise ValidationError(f"运行清单字段无效: {path} ({e})") from e


class RunHistory:
    """运行历史记录管理器"""

    def __init__(self, history_file=None, logger=None):
        """
        初始化运行历史记录管理器

        Args:
            history_file: 历史记录文件路径，如果为None则使用默认路径
            logger: 日志记录器
        """
        if history_file is None:
            history_dir = get_history_dir()
            os.makedirs(history_dir, exist_ok=True)
            history_file = os.path.join(history_dir, 'hyres_history.json')

        self.history_file = history_file
        self.logger = logger or logging.getLogger('HyReS.History')
        self.history = []
        self.load()

    def load(self):
        """加载历史记录"""
        if os.path.exists(self.history_file):
            try:
                with open(self.history_file, 'r', encoding='utf-8') as f:
                    self.history = json.load(f)
                self.logger.debug(f"加载运行历史: {len(self.history)} 条记录")
            except (OSError, json.JSONDecodeError) as e:
                self.logger.error(f"加载运行历史失败: {e}")
                self.history = []
        else:
            self.history = []

    def save(self):
        """保存历史记录（最多保留100条）"""
        if len(self.history) > MAX_RECORDS:
            self.history = self.history[-MAX_RECORDS:]
        try:
            with open(self.history_file, 'w', encoding='utf-8') as f:
                json.dump(self.history, f, ensure_ascii=False, indent=2)
        except OSError as e:
            self.logger.error(f"保存运行历史失败: {e}")

    def add_record(self, manifest: RunManifest, manifest_path=None, exit_code=0):
        """
        添加运行记录

        Args:
            manifest: 运行清单
            manifest_path: 清单文件路径
            exit_code: 退出码
        """
        record = {
            'timestamp': manifest.timestamp or datetime.datetime.now().isoformat(),
            'subcommand': manifest.subcommand,
            'seed': manifest.seed,
            'outputs': manifest.outputs,
            'manifest': manifest_path,
            'exit_code': exit_code,
            'duration_s': manifest.duration_s,
        }
        self.history.append(record)
        self.save()
        self.logger.debug(f"添加运行记录: {manifest.subcommand}")

    def get_recent(self, count=10):
        """获取最近的历史记录"""
        return self.history[-count:]
