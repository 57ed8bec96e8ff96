"""定步长单步积分格式"""

from typing import Callable, Dict, Optional

import numpy as np

from ..processors.error_handler import ConfigurationError, ContractViolationError, check_finite

VectorField = Callable[[np.ndarray], np.ndarray]


def euler_step(rhs: VectorField, s: np.ndarray, dt: float) -> np.ndarray:
    """前向 Euler 单步"""
    return s + dt * rhs(s)


def rk2_step(rhs: VectorField, s: np.ndarray, dt: float) -> np.ndarray:
    """二阶 Runge-Kutta（中点法）单步"""
    k1 = rhs(s)
    k2 = rhs(s + 0.5 * dt * k1)
    return s + dt * k2


def rk4_step(
    rhs: VectorField,
    s: np.ndarray,
    dt: float,
    step: Optional[int] = None,
    threshold: Optional[float] = None,
) -> np.ndarray:
    """经典四阶 Runge-Kutta 单步

    Args:
        rhs: 自治向量场 f(s)
        s: 当前状态（任意形状，向量场逐元素作用）
        dt: 步长，dt = 0 时原样返回
        step: 步序号，给出时检查结果并在发散时抛出 BlowUpError
        threshold: 发散阈值，仅在给出 step 时使用

    Returns:
        np.ndarray: 下一步状态
    """
    if dt < 0:
        raise ContractViolationError(f"步长不能为负: {dt}")
    if dt == 0:
        return s
    k1 = rhs(s)
    k2 = rhs(s + 0.5 * dt * k1)
    k3 = rhs(s + 0.5 * dt * k2)
    k4 = rhs(s + dt * k3)
    out = s + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if step is not None:
        check_finite(out, step, threshold if threshold is not None else 1e6)
    return out


SCHEMES: Dict[str, Callable[[VectorField, np.ndarray, float], np.ndarray]] = {
    "euler": euler_step,
    "rk2": rk2_step,
    "rk4": rk4_step,
}


def get_scheme(name: str) -> Callable[[VectorField, np.ndarray, float], np.ndarray]:
    """按名称获取单步格式"""
    try:
        return SCHEMES[name]
    except KeyError:
        raise ConfigurationError(f"不支持的单步格式: {name}，支持: {sorted(SCHEMES)}") from None
