"""
路径工具模块
统一管理应用程序路径，避免重复定义
"""
import os
import sys


# 模块所在目录（开发模式下即仓库根目录）
MODULE_DIR = os.path.dirname(os.path.abspath(__file__))

# 获取exe所在目录（打包后的exe运行时，这是exe所在的目录）
if getattr(sys, 'frozen', False):
    EXE_DIR = os.path.dirname(os.path.abspath(sys.executable))
    # PyInstaller打包后随包资源位于临时解压目录
    RESOURCE_DIR = getattr(sys, '_MEIPASS', EXE_DIR)
else:
    EXE_DIR = MODULE_DIR
    RESOURCE_DIR = MODULE_DIR


def get_config_path():
    """
    获取配置文件路径

    打包后的exe运行时，配置文件应该在与exe同目录下。

    Returns:
        str: hyres.ini文件的绝对路径
    """
    return os.path.join(EXE_DIR, 'hyres.ini')


def get_models_dir():
    """
    获取随包模型目录（BRISQUE线性评分模型等）

    Returns:
        str: models目录的绝对路径
    """
    return os.path.join(RESOURCE_DIR, 'models')


def get_log_dir():
    """
    获取日志目录路径

    Returns:
        str: logs目录的绝对路径
    """
    return os.path.join(EXE_DIR, 'logs')


def get_history_dir():
    """
    获取运行历史目录路径

    Returns:
        str: history目录的绝对路径
    """
    return os.path.join(EXE_DIR, 'history')


def manifest_path_for(output_path):
    """
    获取某个输出文件对应的运行清单路径

    Args:
        output_path: 主输出文件或目录路径

    Returns:
        str: 清单文件路径（<输出>.manifest.json）
    """
    return os.path.normpath(output_path) + '.manifest.json'
