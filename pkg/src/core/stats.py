"""长时间统计验证 - 均值、标准差、核密度 pdf、ACF、CCF 和 KS 统计量"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import trapezoid
from scipy.signal import fftconvolve
from scipy.stats import gaussian_kde, ks_2samp

from ..processors.error_handler import ContractViolationError, DegenerateDataError

# 核密度网格覆盖数据范围外 3 个带宽
KDE_PADDING = 3.0


class StatsOptions(BaseModel):
    """统计量计算选项"""

    model_config = ConfigDict(extra="forbid")

    max_lag_time: float = Field(default=5.0, gt=0.0, description="ACF/CCF 最大滞后（时间单位）")
    grid_points: int = Field(default=512, ge=16, description="pdf 网格点数")
    component: int = Field(default=0, ge=0, description="统计的分量，CCF 取它与下一个分量")
    pooled: bool = Field(default=False, description="合并所有分量")
    ks_subsample: int = Field(default=1, ge=1, description="KS 统计量每隔多少个观测取一个")

    def max_lag(self, delta: float) -> int:
        return int(round(self.max_lag_time / delta))


@dataclass
class SummaryStats:
    """单个序列的统计量

    acf 为滞后 0..L，ccf 为滞后 -L..L（未计算时为 None）。
    """

    mean: float
    std: float
    pdf_grid: np.ndarray
    pdf_density: np.ndarray
    acf: np.ndarray
    ccf: Optional[np.ndarray] = None
    ks: Optional[float] = None

    @property
    def max_lag(self) -> int:
        return int(self.acf.shape[0] - 1)

    def acf_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"lag": np.arange(self.acf.shape[0]), "value": self.acf})

    def ccf_frame(self) -> pd.DataFrame:
        if self.ccf is None:
            return pd.DataFrame({"lag": [], "value": []})
        L = (self.ccf.shape[0] - 1) // 2
        return pd.DataFrame({"lag": np.arange(-L, L + 1), "value": self.ccf})

    def pdf_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.pdf_grid, "density": self.pdf_density})

    def summary(self) -> Dict[str, Any]:
        return {"mean": self.mean, "std": self.std, "ks": self.ks, "max_lag": self.max_lag}


def _centered(values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ContractViolationError(f"{what} 为空")
    centered = values - values.mean()
    if not np.any(centered):
        raise DegenerateDataError(f"{what} 为常数序列，方差为 0")
    return centered


def acf(values: np.ndarray, max_lag: int) -> np.ndarray:
    """样本自相关函数，按样本方差归一化（有偏估计）

    Returns:
        np.ndarray: 滞后 0..max_lag，acf[0] = 1

    Raises:
        ContractViolationError: max_lag ≥ 序列长度
        DegenerateDataError: 常数序列
    """
    v = _centered(values, "ACF 输入")
    if not 0 <= max_lag < v.size:
        raise ContractViolationError(f"最大滞后 {max_lag} 必须小于序列长度 {v.size}")
    full = fftconvolve(v, v[::-1], mode="full")[v.size - 1 : v.size + max_lag]
    return np.clip(full / full[0], -1.0, 1.0)


def cross_correlation(a: np.ndarray, b: np.ndarray, max_lag: int) -> np.ndarray:
    """归一化互相关 ccf[l] = Σ_t a'_t b'_{t+l} / sqrt(Σa'² Σb'²)

    Returns:
        np.ndarray: 滞后 -max_lag..max_lag，中间元素为滞后 0

    Raises:
        ContractViolationError: 长度不同或 max_lag ≥ 长度
        DegenerateDataError: 任一序列为常数
    """
    a_c = _centered(a, "CCF 输入 a")
    b_c = _centered(b, "CCF 输入 b")
    if a_c.size != b_c.size:
        raise ContractViolationError("CCF 输入长度不同", {"a": a_c.size, "b": b_c.size})
    n = a_c.size
    if not 0 <= max_lag < n:
        raise ContractViolationError(f"最大滞后 {max_lag} 必须小于序列长度 {n}")
    full = fftconvolve(b_c, a_c[::-1], mode="full")
    norm = np.sqrt(np.dot(a_c, a_c) * np.dot(b_c, b_c))
    out = full[n - 1 - max_lag : n + max_lag] / norm
    return np.clip(out, -1.0, 1.0)


def ks_statistic(sample_a: np.ndarray, sample_b: np.ndarray) -> float:
    """两样本 Kolmogorov-Smirnov 统计量 D = sup|F_a - F_b|

    Raises:
        ContractViolationError: 任一样本为空
    """
    a = np.asarray(sample_a, dtype=float).reshape(-1)
    b = np.asarray(sample_b, dtype=float).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ContractViolationError("KS 统计量的样本不能为空", {"n_a": a.size, "n_b": b.size})
    return float(ks_2samp(a, b).statistic)


def silverman_bandwidth(values: np.ndarray) -> float:
    """0.9·min(std, IQR/1.34)·n^(-1/5)"""
    values = np.asarray(values, dtype=float).reshape(-1)
    std = float(np.std(values))
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(std, (q75 - q25) / 1.34) if q75 > q25 else std
    return 0.9 * spread * values.size ** (-0.2)


def kde_pdf(values: np.ndarray, grid_points: int = 512) -> Tuple[np.ndarray, np.ndarray]:
    """高斯核密度估计，Silverman 带宽，网格为数据范围 ±3 个带宽

    网格上用梯形公式重新归一化。

    Returns:
        Tuple[np.ndarray, np.ndarray]: (grid, density)
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    std = float(np.std(values))
    if std == 0.0:
        raise DegenerateDataError("常数序列无法做核密度估计")
    bw = silverman_bandwidth(values)
    grid = np.linspace(values.min() - KDE_PADDING * bw, values.max() + KDE_PADDING * bw, grid_points)
    kde = gaussian_kde(values, bw_method=bw / std)
    density = np.maximum(kde(grid), 0.0)
    density /= trapezoid(density, grid)
    return grid, density


def summarize(
    values: np.ndarray,
    max_lag: int,
    grid_points: int = 512,
    partner: Optional[np.ndarray] = None,
    reference: Optional[np.ndarray] = None,
    ks_subsample: int = 1,
) -> SummaryStats:
    """单分量序列的统计量

    Args:
        values: 一维序列
        max_lag: ACF/CCF 最大滞后（步数）
        grid_points: pdf 网格点数
        partner: 给出时计算与它的 CCF
        reference: 给出时计算与它的 KS 统计量
        ks_subsample: KS 计算时两个样本都每隔若干个取一个

    Raises:
        DegenerateDataError: 常数序列
        ContractViolationError: max_lag ≥ 长度
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size < 2:
        raise ContractViolationError(f"序列太短: {values.size}")
    std = float(np.std(values, ddof=1))
    if std == 0.0:
        raise DegenerateDataError("常数序列的标准差为 0")
    grid, density = kde_pdf(values, grid_points)
    ccf = cross_correlation(values, partner, max_lag) if partner is not None else None
    ks = None
    if reference is not None:
        ks = ks_statistic(values[::ks_subsample], np.asarray(reference).reshape(-1)[::ks_subsample])
    return SummaryStats(
        mean=float(np.mean(values)),
        std=std,
        pdf_grid=grid,
        pdf_density=density,
        acf=acf(values, max_lag),
        ccf=ccf,
        ks=ks,
    )


def summarize_series(
    x_obs: np.ndarray,
    delta: float,
    opts: Optional[StatsOptions] = None,
    reference: Optional[np.ndarray] = None,
) -> SummaryStats:
    """按选项对 (N, K) 轨道计算统计量

    单分量模式统计 x_c，CCF 取 x_c 与 x_{c+1}。合并模式下均值、标准差、pdf 和 KS
    使用所有分量的样本，ACF/CCF 为各分量（相邻分量对）的平均。

    Args:
        x_obs: (N, K) 轨道
        delta: 采样间隔，用于把滞后时间换算成步数
        opts: 统计选项
        reference: (N', K) 参考轨道（通常为全模型），用于 KS
    """
    opts = opts or StatsOptions()
    x_obs = np.asarray(x_obs, dtype=float)
    N, K = x_obs.shape
    L = opts.max_lag(delta)
    c = opts.component
    if c >= K:
        raise ContractViolationError(f"分量下标 {c} 超出范围 K={K}")

    if not opts.pooled:
        ref = None if reference is None else np.asarray(reference)[:, c]
        return summarize(
            x_obs[:, c], L, opts.grid_points, partner=x_obs[:, (c + 1) % K], reference=ref,
            ks_subsample=opts.ks_subsample,
        )

    pooled = x_obs.ravel()
    std = float(np.std(pooled, ddof=1))
    if std == 0.0:
        raise DegenerateDataError("常数序列的标准差为 0")
    grid, density = kde_pdf(pooled, opts.grid_points)
    acf_mean = np.mean([acf(x_obs[:, k], L) for k in range(K)], axis=0)
    ccf_mean = np.mean([cross_correlation(x_obs[:, k], x_obs[:, (k + 1) % K], L) for k in range(K)], axis=0)
    ks = None
    if reference is not None:
        step = opts.ks_subsample
        ks = ks_statistic(x_obs[::step].ravel(), np.asarray(reference)[::step].ravel())
    logger.debug(f"合并 {K} 个分量计算统计量, N={N}, L={L}")
    return SummaryStats(
        mean=float(np.mean(pooled)), std=std, pdf_grid=grid, pdf_density=density,
        acf=acf_mean, ccf=ccf_mean, ks=ks,
    )


def acf_max_deviation(acf_a: np.ndarray, acf_b: np.ndarray) -> float:
    """两条 ACF（或 CCF）在共同滞后上的最大绝对差"""
    a = np.asarray(acf_a, dtype=float)
    b = np.asarray(acf_b, dtype=float)
    n = min(a.size, b.size)
    if n == 0:
        raise ContractViolationError("ACF 为空")
    return float(np.max(np.abs(a[:n] - b[:n])))
