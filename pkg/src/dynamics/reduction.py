"""截断模型单步映射 R_δ 与离散不可解趋势提取"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..processors.error_handler import ContractViolationError, InsufficientDataError, check_finite
from .base import SeriesSet
from .integrators import get_scheme
from .lorenz96 import truncated_rhs


class ReducedMap(BaseModel):
    """截断模型的确定性单步映射 x -> x + δ·R_δ(x)"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    K: int = Field(..., ge=4, description="维数")
    F: float = Field(default=10.0, description="外强迫")
    delta: float = Field(..., gt=0.0, description="步长 δ")
    scheme: Literal["euler", "rk2", "rk4"] = Field(default="rk4", description="单步格式")

    def vector_field(self, x: np.ndarray) -> np.ndarray:
        """截断向量场"""
        return truncated_rhs(x, self.F)

    def increment(self, x: np.ndarray) -> np.ndarray:
        """R_δ(x)，最后一维为空间维"""
        if self.scheme == "euler":
            # Euler 格式下 R_δ 即向量场本身，避免 (x + δf - x)/δ 的舍入
            return self.vector_field(x)
        stepper = get_scheme(self.scheme)
        return (stepper(self.vector_field, x, self.delta) - x) / self.delta

    def step(self, x: np.ndarray) -> np.ndarray:
        """确定性单步 x + δ·R_δ(x)"""
        return x + self.delta * self.increment(x)


def reduced_increment(m: ReducedMap, x: np.ndarray) -> np.ndarray:
    """计算 R_δ(x)

    Args:
        m: 单步映射
        x: 长度 K 的状态（或带前导批维度）

    Returns:
        np.ndarray: R_δ(x)

    Raises:
        BlowUpError: 结果非有限
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.K:
        raise ContractViolationError(f"状态维数 {x.shape[-1]} 与 K={m.K} 不符")
    out = m.increment(x)
    check_finite(out, step=0, threshold=np.inf, what="R_δ")
    return out


def extract_discrepancy(m: ReducedMap, x_obs: np.ndarray) -> np.ndarray:
    """由观测精确提取离散不可解趋势

    z^{n+1} = (x^{n+1} - x^n)/δ - R_δ(x^n)

    Args:
        m: 单步映射（δ 必须等于采样间隔）
        x_obs: (N, K) 观测

    Returns:
        np.ndarray: (N-1, K)，第 i 行对应 z^{i+1}

    Raises:
        InsufficientDataError: N < 2
    """
    x_obs = np.asarray(x_obs, dtype=float)
    if x_obs.ndim != 2 or x_obs.shape[0] < 2:
        raise InsufficientDataError("提取 z 至少需要 2 行观测", {"shape": x_obs.shape})
    R = reduced_increment(m, x_obs[:-1])
    return (x_obs[1:] - x_obs[:-1]) / m.delta - R


def with_discrepancy(m: ReducedMap, series: SeriesSet) -> SeriesSet:
    """返回附带 z 序列的 SeriesSet"""
    if abs(series.delta - m.delta) > 1e-12 * max(1.0, m.delta):
        raise ContractViolationError(
            "单步映射步长与序列采样间隔不一致",
            {"map_delta": m.delta, "series_delta": series.delta},
        )
    if series.N < 2:
        raise InsufficientDataError("提取 z 至少需要 2 行观测", {"N": series.N})
    x = series.x_obs
    rx = reduced_increment(m, x[:-1])
    z = (x[1:] - x[:-1]) / m.delta - rx
    return SeriesSet(delta=series.delta, x_obs=x, z=z, rx=rx, xi=series.xi)


def reconstruct(m: ReducedMap, x0: np.ndarray, z: np.ndarray) -> np.ndarray:
    """由初值和 z 序列前向重建 x：x^{n+1} = x^n + δR_δ(x^n) + δz^{n+1}

    Returns:
        np.ndarray: (len(z)+1, K)
    """
    z = np.asarray(z, dtype=float)
    out = np.empty((z.shape[0] + 1, z.shape[1]))
    out[0] = x0
    for i in range(z.shape[0]):
        out[i + 1] = out[i] + m.delta * m.increment(out[i]) + m.delta * z[i]
    return out
