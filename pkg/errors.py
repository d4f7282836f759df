"""
异常定义模块
所有领域错误都继承HyresError，同时继承对应的内置异常，
便于调用方按ValueError/OSError统一捕获
"""


class HyresError(Exception):
    """HyReS错误基类"""


class CubeFormatError(HyresError, ValueError):
    """容器文件头错误（魔数或版本不匹配）"""


class CubeCorruptionError(HyresError, ValueError):
    """容器数据被截断或长度不符"""


class ValidationError(HyresError, ValueError):
    """数据或参数不满足约束"""


class SymmetryError(HyresError, ValueError):
    """逆变换虚部残差过大，输入频谱不满足厄米对称"""


class UndefinedCurveError(HyresError, ValueError):
    """FRC所有环都无定义（能量为零）"""


class FitError(HyresError, ValueError):
    """高斯拟合失败或数据退化"""


class EmptyCubeError(HyresError, ValueError):
    """过滤后数据立方体没有剩余通道"""


class TrainingError(HyresError, RuntimeError):
    """训练过程中出现非有限损失等异常"""


class ModelFormatError(HyresError, ValueError):
    """模型文件格式错误"""
