"""POLYAR 基线 - 有限差分噪声估计、多项式回归、AR(1) 残差与冻结噪声的 RK4 积分

dx_k/dt = x_{k-1}(x_{k+1} - x_{k-2}) - x_k + F + P(x_k) + η_k
η_k(t+δ) = φ η_k(t) + σ ξ_k(t)
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from numpy.polynomial import polynomial as npoly
from pydantic import BaseModel, ConfigDict, Field

from ..dynamics.base import EnsembleRun, SeriesSet
from ..dynamics.integrators import rk4_step
from ..dynamics.lorenz96 import truncated_rhs
from ..dynamics.reduction import ReducedMap
from ..processors.error_handler import (
    BlowUpError,
    ContractViolationError,
    DegenerateDataError,
    InsufficientDataError,
)
from .optimizer import least_squares

SeedLike = Union[int, np.random.SeedSequence]


class PolyarParams(BaseModel):
    """POLYAR 参数，JSON 形式 {poly, phi, sigma, delta}"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    poly: List[float] = Field(..., min_length=1, description="多项式系数 c0..c_deg，按幂次升序")
    phi: float = Field(..., description="AR(1) 系数 φ")
    sigma: float = Field(..., ge=0.0, description="AR(1) 新息尺度 σ")
    delta: float = Field(..., gt=0.0, description="拟合与模拟使用的步长")

    @property
    def degree(self) -> int:
        return len(self.poly) - 1

    @property
    def stationary(self) -> bool:
        return abs(self.phi) < 1.0

    def polynomial(self, x: np.ndarray) -> np.ndarray:
        """P(x) = Σ c_i x^i，逐元素"""
        return npoly.polyval(x, self.poly)


@dataclass
class PolyarFitSummary:
    """POLYAR 拟合摘要"""

    n_samples: int
    z_variance: float
    eta_variance: float

    def summary(self) -> Dict[str, Any]:
        return {
            "n_samples": self.n_samples,
            "z_variance": self.z_variance,
            "eta_variance": self.eta_variance,
            "explained_fraction": 1.0 - self.eta_variance / self.z_variance if self.z_variance > 0 else 0.0,
        }


def estimate_z_fd(x_obs: np.ndarray, delta: float, F: float = 10.0) -> np.ndarray:
    """前向差分估计连续的不可解趋势

    z_k(t) ≈ (x_k(t+δ) - x_k(t))/δ - x_{k-1}(x_{k+1} - x_{k-2}) + x_k - F

    与 Euler 格式下的离散趋势提取逐位相同。

    Returns:
        np.ndarray: (N-1, K)，第 i 行与 x_obs[i] 配对

    Raises:
        InsufficientDataError: N < 2
    """
    x_obs = np.asarray(x_obs, dtype=float)
    if x_obs.ndim != 2 or x_obs.shape[0] < 2:
        raise InsufficientDataError("有限差分估计至少需要 2 行观测", {"shape": x_obs.shape})
    return (x_obs[1:] - x_obs[:-1]) / delta - truncated_rhs(x_obs[:-1], F)


def fit_poly(x: np.ndarray, z: np.ndarray, degree: int = 5) -> np.ndarray:
    """最小二乘拟合 z ≈ P(x)，所有分量和时刻合并

    Returns:
        np.ndarray: (degree+1,) 系数，按幂次升序

    Raises:
        ContractViolationError: x 与 z 形状不同或 degree < 0
        RankDeficiencyError: 样本不足以区分各次幂
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    if x.shape != z.shape:
        raise ContractViolationError("x 与 z 样本数不一致", {"x": x.shape, "z": z.shape})
    if degree < 0:
        raise ContractViolationError(f"多项式次数不能为负: {degree}")
    A = npoly.polyvander(x, degree)
    return least_squares(A, z, column_names=[f"c{i}" for i in range(degree + 1)])


def fit_ar1(eta: np.ndarray) -> Tuple[float, float]:
    """估计 AR(1) 参数

    φ = Σ η_t η_{t+1} / Σ η_t²（滞后 1 回归），σ 为回归残差的均方根。
    二维输入按列（分量）合并。

    Raises:
        InsufficientDataError: 长度 < 3
        DegenerateDataError: 序列方差为 0
    """
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 1:
        eta = eta[:, None]
    if eta.shape[0] < 3:
        raise InsufficientDataError(f"AR(1) 拟合至少需要 3 个样本, 实际 {eta.shape[0]}")
    head, tail = eta[:-1], eta[1:]
    denom = float(np.sum(head * head))
    if denom == 0.0 or float(np.var(eta)) == 0.0:
        raise DegenerateDataError("残差序列方差为 0，无法估计 AR(1)")
    phi = float(np.sum(head * tail)) / denom
    sigma = float(np.sqrt(np.mean((tail - phi * head) ** 2)))
    return phi, sigma


def fit_polyar(
    x_obs: np.ndarray,
    delta: float,
    F: float = 10.0,
    degree: int = 5,
    component: Optional[int] = None,
) -> Tuple[PolyarParams, PolyarFitSummary]:
    """完整的 POLYAR 拟合：有限差分 z → 多项式 → AR(1)

    Args:
        x_obs: (N, K) 观测
        delta: 采样间隔
        F: 外强迫
        degree: 多项式次数
        component: 给出时只用该分量拟合

    Returns:
        Tuple[PolyarParams, PolyarFitSummary]: 参数和拟合摘要
    """
    x_obs = np.asarray(x_obs, dtype=float)
    z = estimate_z_fd(x_obs, delta, F)
    x = x_obs[:-1]
    if component is not None:
        if not 0 <= component < x_obs.shape[1]:
            raise ContractViolationError(f"分量下标 {component} 超出范围 K={x_obs.shape[1]}")
        x, z = x[:, [component]], z[:, [component]]

    poly = fit_poly(x, z, degree)
    eta = z - npoly.polyval(x, poly)
    phi, sigma = fit_ar1(eta)
    params = PolyarParams(poly=poly.tolist(), phi=phi, sigma=sigma, delta=delta)
    summary = PolyarFitSummary(n_samples=int(z.size), z_variance=float(np.var(z)), eta_variance=float(np.var(eta)))
    if not params.stationary:
        logger.warning(f"POLYAR 的 AR(1) 系数 |φ|={abs(phi):.4f} ≥ 1，模拟将不平稳")
    logger.info(
        f"POLYAR 拟合完成: 次数={degree}, φ={phi:.4f}, σ={sigma:.4f}, "
        f"方差 {summary.z_variance:.4g} -> {summary.eta_variance:.4g}"
    )
    return params, summary


def fd_residual(params: PolyarParams, x_window: np.ndarray, F: float = 10.0) -> np.ndarray:
    """初始化窗口上的 η 估计 z_fd - P(x)，(n-1, K)"""
    x_window = np.asarray(x_window, dtype=float)
    return estimate_z_fd(x_window, params.delta, F) - params.polynomial(x_window[:-1])


def _check_map(params: PolyarParams, reduced: ReducedMap) -> None:
    if abs(params.delta - reduced.delta) > 1e-12 * max(1.0, reduced.delta):
        raise ContractViolationError(
            "POLYAR 参数步长与单步映射不一致",
            {"params_delta": params.delta, "map_delta": reduced.delta},
        )


def _polyar_step(params: PolyarParams, reduced: ReducedMap, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """η 冻结时的一个 RK4 步"""

    def rhs(v: np.ndarray) -> np.ndarray:
        return truncated_rhs(v, reduced.F) + params.polynomial(v) + eta

    return rk4_step(rhs, x, reduced.delta)


def simulate_polyar(
    params: PolyarParams,
    reduced: ReducedMap,
    x0: np.ndarray,
    eta0: np.ndarray,
    n_steps: int,
    seed: SeedLike,
    threshold: float = 1e6,
) -> SeriesSet:
    """模拟 POLYAR 系统

    每步先以冻结的 η(t) 做一个步长为 δ 的 RK4 步得到 x(t+δ)，
    再由 AR(1) 得到 η(t+δ)。

    Returns:
        SeriesSet: x_obs 为 n_steps+1 行（含 x0），xi[i] 为推进 x^i → x^{i+1} 时使用的 η

    Raises:
        BlowUpError: 轨道发散，附步序号
    """
    _check_map(params, reduced)
    x = np.asarray(x0, dtype=float).copy()
    eta = np.broadcast_to(np.asarray(eta0, dtype=float), x.shape).copy()
    if x.shape != (reduced.K,):
        raise ContractViolationError(f"初值维数 {x.shape} 与 K={reduced.K} 不符")
    if n_steps < 0:
        raise ContractViolationError(f"步数不能为负: {n_steps}")
    if not params.stationary:
        logger.warning(f"|φ|={abs(params.phi):.4f} ≥ 1，η 过程不平稳")

    noise = params.sigma * np.random.default_rng(seed).standard_normal((n_steps, reduced.K))
    xs = np.empty((n_steps + 1, reduced.K))
    etas = np.empty((n_steps, reduced.K))
    xs[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            etas[n] = eta
            x = _polyar_step(params, reduced, x, eta)
            if not np.all(np.isfinite(x)) or np.any(np.abs(x) > threshold):
                raise BlowUpError(f"POLYAR 模拟在第 {n + 1} 步发散", step=n + 1)
            xs[n + 1] = x
            eta = params.phi * eta + noise[n]
    return SeriesSet(delta=reduced.delta, x_obs=xs, xi=etas)


def simulate_polyar_ensemble(
    params: PolyarParams,
    reduced: ReducedMap,
    x0: np.ndarray,
    eta0: np.ndarray,
    n_steps: int,
    member_seeds: Sequence[SeedLike],
    threshold: float = 1e6,
) -> EnsembleRun:
    """从同一 (x0, η0) 批量模拟多个成员，发散成员置为 NaN"""
    _check_map(params, reduced)
    n_members = len(member_seeds)
    if n_members < 1:
        raise ContractViolationError("成员数必须 ≥ 1")
    K = reduced.K
    noise = np.stack(
        [params.sigma * np.random.default_rng(s).standard_normal((n_steps, K)) for s in member_seeds], axis=1
    )
    x = np.repeat(np.asarray(x0, dtype=float).reshape(1, K), n_members, axis=0)
    eta = np.repeat(np.broadcast_to(np.asarray(eta0, dtype=float), (K,)).reshape(1, K), n_members, axis=0)

    out = np.empty((n_members, n_steps, K))
    alive = np.ones(n_members, dtype=bool)
    blowup_steps: Dict[int, int] = {}
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            x = _polyar_step(params, reduced, x, eta)
            dead = alive & (~np.all(np.isfinite(x), axis=1) | np.any(np.abs(x) > threshold, axis=1))
            if np.any(dead):
                for m in np.flatnonzero(dead):
                    blowup_steps[int(m)] = n + 1
                alive &= ~dead
                x[dead] = np.nan
                eta[dead] = np.nan
            out[:, n] = x
            eta = params.phi * eta + noise[n]
    return EnsembleRun(x=out, alive=alive, blowup_steps=blowup_steps)
