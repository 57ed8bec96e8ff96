"""共享测试配置和夹具"""

import os

import numpy as np
import pytest

# 设置测试环境变量（在import settings之前）
os.environ.setdefault("NARMAX_ENVIRONMENT", "testing")
os.environ.setdefault("NARMAX_DEBUG", "false")
os.environ.setdefault("NARMAX_LOGGING__LEVEL", "WARNING")

from src.config.experiment import PipelineConfig
from src.core.narmax import NarmaxParams, NarmaxStructure, simulate
from src.dynamics.base import L96Config, SeriesSet
from src.dynamics.lorenz96 import generate_dataset
from src.dynamics.reduction import ReducedMap, with_discrepancy


@pytest.fixture(scope="session")
def small_l96():
    """小规模两尺度系统：K=8, J=4, dt=0.005"""
    return L96Config(K=8, J=4, dt=0.005, spinup=2.0, seed=7)


@pytest.fixture(scope="session")
def small_dataset(small_l96):
    """δ=0.05 的 600 行观测"""
    delta = 0.05
    return generate_dataset(small_l96, small_l96.spinup + 599 * delta, delta)


@pytest.fixture(scope="session")
def small_map(small_l96):
    return ReducedMap(K=small_l96.K, F=small_l96.F, delta=0.05, scheme="rk4")


@pytest.fixture(scope="session")
def small_series(small_map, small_dataset):
    """附带 z 和 R_δ(x) 的观测序列"""
    return with_discrepancy(small_map, small_dataset)


@pytest.fixture
def narmax_structure():
    """p=1, r=1, d_x=1, q=1 的结构"""
    return NarmaxStructure(p=1, r=1, s=0, q=1, d_x=1, d_R=0)


@pytest.fixture
def narmax_params():
    return NarmaxParams(mu=0.3, a=[0.8], b=[[-0.1]], c=np.zeros((0, 0)), d=[0.4], sigma2=0.05)


@pytest.fixture
def synthetic_series(small_map, small_dataset, narmax_structure, narmax_params):
    """由已知 NARMAX 模型生成的序列（含初始窗口）"""
    init = small_dataset.head(narmax_structure.history_length)
    return simulate(narmax_structure, narmax_params, small_map, init, 400, seed=11)


@pytest.fixture
def random_series():
    """独立随机的 (N, K) 序列，附带随意的 z"""
    rng = np.random.default_rng(3)
    x = rng.normal(size=(200, 6))
    z = rng.normal(size=(199, 6))
    return SeriesSet(delta=0.05, x_obs=x, z=z)


@pytest.fixture
def tiny_config(tmp_path):
    """端到端管道用的小配置"""
    return PipelineConfig.model_validate(
        {
            "model": {"K": 8, "J": 4, "dt": 0.005, "spinup": 2.0},
            "delta": 0.05,
            "n_obs": 400,
            "seed": 5,
            "narmax": {"p": 1, "r": 1, "s": 0, "q": 0, "d_x": 1, "d_R": 0},
            "polyar": {"degree": 1},
            "stats": {"max_lag_time": 1.0, "grid_points": 64},
            "forecast": {"n_segments": 3, "horizon": 0.5, "ensemble_sizes": [1, 2]},
            "output_dir": str(tmp_path / "run"),
        }
    )
