"""两尺度 Lorenz 96 系统 - 向量场、截断向量场和真值数据生成"""

from typing import Callable

import numpy as np
from loguru import logger

from ..processors.error_handler import ConfigurationError, ContractViolationError
from .base import FullState, L96Config, SeriesSet
from .integrators import rk4_step


def truncated_rhs(x: np.ndarray, F: float) -> np.ndarray:
    """截断向量场 x_{k-1}(x_{k+1} - x_{k-2}) - x_k + F

    最后一维为空间维（循环下标），前导维度逐批计算。
    """
    return np.roll(x, 1, axis=-1) * (np.roll(x, -1, axis=-1) - np.roll(x, 2, axis=-1)) - x + F


def packed_rhs(cfg: L96Config) -> Callable[[np.ndarray], np.ndarray]:
    """构造打包状态 [x, y(列优先)] 上的全系统向量场

    Args:
        cfg: 系统参数

    Returns:
        Callable: v -> dv/dt
    """
    K, J = cfg.K, cfg.J
    coupling_x = cfg.h_x / J
    inv_eps = 1.0 / cfg.eps

    def rhs(v: np.ndarray) -> np.ndarray:
        x = v[:K]
        y = v[K:]
        z = coupling_x * y.reshape(K, J).sum(axis=1)
        dx = truncated_rhs(x, cfg.F) + z
        dy = inv_eps * (
            np.roll(y, -1) * (np.roll(y, 1) - np.roll(y, -2)) - y + cfg.h_y * np.repeat(x, J)
        )
        return np.concatenate([dx, dy])

    return rhs


def full_rhs(cfg: L96Config, s: FullState) -> FullState:
    """全系统向量场

    Args:
        cfg: 系统参数
        s: 当前状态

    Returns:
        FullState: (dx/dt, dy/dt)，形状与 s 相同

    Raises:
        ContractViolationError: 状态维度与参数不一致
    """
    if s.K != cfg.K or s.J != cfg.J:
        raise ContractViolationError(
            "状态维度与配置不一致",
            {"state": (s.J, s.K), "config": (cfg.J, cfg.K)},
        )
    deriv = packed_rhs(cfg)(s.pack())
    return FullState.unpack(deriv, cfg.K, cfg.J)


def initial_state(cfg: L96Config, trajectory: int = 0) -> FullState:
    """按种子生成初始状态：x ~ U[-1,1]·F/2，y ~ U[-0.1,0.1]

    每条轨道的随机流由 (cfg.seed, trajectory) 派生。
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, trajectory]))
    x = rng.uniform(-1.0, 1.0, size=cfg.K) * cfg.F / 2.0
    y = rng.uniform(-0.1, 0.1, size=(cfg.J, cfg.K))
    return FullState(x=x, y=y)


def steps_per_interval(interval: float, dt: float, what: str = "delta") -> int:
    """校验 interval 是 dt 的整数倍并返回步数"""
    ratio = interval / dt
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise ConfigurationError(
            f"{what}={interval} 不是积分步长 dt={dt} 的整数倍",
            {what: interval, "dt": dt},
        )
    return n


def generate_dataset(
    cfg: L96Config,
    T: float,
    delta: float,
    trajectory: int = 0,
    threshold: float = 1e6,
) -> SeriesSet:
    """积分全系统并按间隔 delta 记录 x

    从 spinup 时刻起记录，共 round((T - spinup)/delta) + 1 行。

    Args:
        cfg: 系统参数
        T: 总积分时长（含 spinup）
        delta: 观测间隔，必须是 cfg.dt 的整数倍
        trajectory: 轨道编号（派生随机流）
        threshold: 发散阈值

    Returns:
        SeriesSet: 仅含 x_obs 的序列

    Raises:
        ConfigurationError: delta 不是 dt 的整数倍或 T < spinup
        BlowUpError: 积分发散
    """
    if T < cfg.spinup:
        raise ConfigurationError(f"总时长 T={T} 小于 spinup={cfg.spinup}")
    n_sub = steps_per_interval(delta, cfg.dt)
    n_spin = int(round(cfg.spinup / cfg.dt))
    n_rows = int(round((T - cfg.spinup) / delta)) + 1

    rhs = packed_rhs(cfg)
    v = initial_state(cfg, trajectory).pack()
    step = 0
    for _ in range(n_spin):
        step += 1
        v = rk4_step(rhs, v, cfg.dt, step=step, threshold=threshold)

    x_obs = np.empty((n_rows, cfg.K))
    x_obs[0] = v[: cfg.K]
    report_every = max(1, n_rows // 10)
    for row in range(1, n_rows):
        for _ in range(n_sub):
            step += 1
            v = rk4_step(rhs, v, cfg.dt, step=step, threshold=threshold)
        x_obs[row] = v[: cfg.K]
        if row % report_every == 0:
            logger.debug(f"全系统积分进度: {row}/{n_rows - 1}")

    logger.info(
        f"真值数据生成完成: {n_rows} 行, K={cfg.K}, δ={delta}, 共 {step} 个积分步"
    )
    return SeriesSet(delta=delta, x_obs=x_obs)
