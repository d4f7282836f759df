"""
测试公共夹具
"""
import os
import sys

import numpy as np
import pytest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from cube_io import ChannelImage  # noqa: E402
from phantoms import synthetic_cube  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def isolated_dirs(tmp_path, monkeypatch):
    """把日志、运行历史与配置文件都重定向到临时目录"""
    import hyres_tool
    import run_manifest
    monkeypatch.setattr(hyres_tool, 'get_log_dir', lambda: str(tmp_path / 'logs'))
    monkeypatch.setattr(run_manifest, 'get_history_dir', lambda: str(tmp_path / 'history'))
    return tmp_path


@pytest.fixture
def config_path(tmp_path):
    return str(tmp_path / 'hyres.ini')


@pytest.fixture
def small_cube():
    return synthetic_cube(3, 64, seed=7, pixel_size_um=25.0)


@pytest.fixture
def random_image(rng):
    def make(height, width=None):
        return ChannelImage(rng.random((height, height if width is None else width)))
    return make
