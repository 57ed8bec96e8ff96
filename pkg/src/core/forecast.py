"""集合预报实验 - 由真值片段初始化约化模型集合，按预报时效统计 RMSE 和 ANCR"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from ..dynamics.base import EnsembleRun, SeriesSet
from ..dynamics.lorenz96 import steps_per_interval
from ..dynamics.reduction import ReducedMap
from ..processors.error_handler import BlowUpError, ContractViolationError
from .narmax import NarmaxParams, NarmaxStructure, SeedLike, simulate_ensemble
from .polyar import PolyarParams, fd_residual, simulate_polyar_ensemble

# ANCR 跌破该值的时效作为比较指标
DEFAULT_ANCR_LEVEL = 0.6


class ForecastConfig(BaseModel):
    """集合预报参数"""

    model_config = ConfigDict(extra="forbid")

    n_segments: int = Field(default=500, ge=1, description="真值片段数 N₀")
    horizon: float = Field(default=10.0, gt=0.0, description="每个片段的预报时长")
    ensemble_size: int = Field(default=20, ge=1, description="集合成员数 N_ens")
    seed: int = Field(default=0, ge=0, description="主随机种子")
    max_blowup_fraction: float = Field(default=0.01, ge=0.0, le=1.0, description="允许发散的成员比例")


class ForecastModel(Protocol):
    """可做集合预报的约化模型"""

    name: str

    @property
    def history_length(self) -> int: ...

    @property
    def delta(self) -> float: ...

    def ensemble(self, window: np.ndarray, n_steps: int, member_seeds: Sequence[SeedLike]) -> EnsembleRun: ...


@dataclass
class NarmaxForecaster:
    """NARMAX 模型适配器：x 取真值窗口，z 由窗口提取，ξ 由窗口残差初始化"""

    structure: NarmaxStructure
    params: NarmaxParams
    reduced: ReducedMap
    threshold: float = 1e6
    name: str = "narmax"

    @property
    def history_length(self) -> int:
        return self.structure.history_length

    @property
    def delta(self) -> float:
        return self.reduced.delta

    def ensemble(self, window: np.ndarray, n_steps: int, member_seeds: Sequence[SeedLike]) -> EnsembleRun:
        init = SeriesSet(delta=self.reduced.delta, x_obs=window)
        return simulate_ensemble(
            self.structure, self.params, self.reduced, init, n_steps, member_seeds, threshold=self.threshold
        )


@dataclass
class PolyarForecaster:
    """POLYAR 模型适配器：η 取窗口最后一个有限差分残差按 φ 外推的条件均值"""

    params: PolyarParams
    reduced: ReducedMap
    threshold: float = 1e6
    name: str = "polyar"

    @property
    def history_length(self) -> int:
        return 2

    @property
    def delta(self) -> float:
        return self.reduced.delta

    def ensemble(self, window: np.ndarray, n_steps: int, member_seeds: Sequence[SeedLike]) -> EnsembleRun:
        eta_last = fd_residual(self.params, window, self.reduced.F)[-1]
        return simulate_polyar_ensemble(
            self.params,
            self.reduced,
            window[-1],
            self.params.phi * eta_last,
            n_steps,
            member_seeds,
            threshold=self.threshold,
        )


@dataclass
class ForecastScore:
    """按时效的预报评分，lead 0 为初始化窗口的最后一个时刻"""

    model: str
    ensemble_size: int
    leads: np.ndarray
    rmse: np.ndarray
    ancr: np.ndarray
    n_segments: int
    n_members: int
    n_excluded: int = 0
    excluded: Dict[int, List[int]] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"lead": self.leads, "rmse": self.rmse, "ancr": self.ancr})

    def summary(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "ensemble_size": self.ensemble_size,
            "n_segments": self.n_segments,
            "n_members": self.n_members,
            "n_excluded": self.n_excluded,
            "ancr_crossing": crossing_lead(self),
        }


def anomaly_correlation(forecast: np.ndarray, truth: np.ndarray, climatology: np.ndarray) -> np.ndarray:
    """中心化余弦相似度，按最后一维（空间分量）计算

    预报或真值距平中心化后范数为 0 时结果为 0。
    """
    f = forecast - climatology
    t = truth - climatology
    f = f - f.mean(axis=-1, keepdims=True)
    t = t - t.mean(axis=-1, keepdims=True)
    num = np.sum(f * t, axis=-1)
    den = np.sqrt(np.sum(f * f, axis=-1) * np.sum(t * t, axis=-1))
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return np.clip(out, -1.0, 1.0)


def truth_segments(
    truth: np.ndarray,
    n_segments: int,
    n0: int,
    n_steps: int,
    segment_rows: Optional[int] = None,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """切分互不重叠的片段，每段为 (初始化窗口 n0 行, 随后 n_steps 行真值)

    每段占 segment_rows 行（默认 n0 + n_steps），预报起点固定在段末 n_steps 行之前，
    不同 n0 的模型因此使用相同的预报起点。

    Raises:
        ContractViolationError: n0 < 2、段长不足或真值长度不足
    """
    seg_rows = segment_rows if segment_rows is not None else n0 + n_steps
    if n0 < 2:
        raise ContractViolationError(f"初始化步数 n₀ 必须 ≥ 2: {n0}")
    if seg_rows < n0 + n_steps:
        raise ContractViolationError(
            f"片段长度 {seg_rows} 小于 n₀ + 预报步数 = {n0 + n_steps}",
            {"segment_rows": seg_rows, "n0": n0, "n_steps": n_steps},
        )
    if truth.shape[0] < n_segments * seg_rows:
        raise ContractViolationError(
            f"真值只有 {truth.shape[0]} 行，{n_segments} 个片段需要 {n_segments * seg_rows} 行",
            {"rows": truth.shape[0], "segment_rows": seg_rows},
        )
    segments = []
    for i in range(n_segments):
        start = i * seg_rows + seg_rows - n_steps
        segments.append((truth[start - n0 : start], truth[start : start + n_steps]))
    return segments


def member_seeds(seed: int, segment: int, n_members: int) -> List[np.random.SeedSequence]:
    """成员噪声种子由 (主种子, 片段, 成员) 派生"""
    return [np.random.SeedSequence([seed, segment, m]) for m in range(n_members)]


def run_forecast(
    model: ForecastModel,
    truth: np.ndarray,
    cfg: ForecastConfig,
    climatology: np.ndarray,
    max_workers: int = 1,
    segment_rows: Optional[int] = None,
) -> ForecastScore:
    """集合预报实验

    每个片段用真值的前 n₀ 步初始化所有成员（不加扰动），成员只在噪声上不同；
    集合平均与真值比较。片段在线程池中并行，结果按片段顺序汇总。

    Args:
        model: 约化模型适配器
        truth: (N, K) 全模型轨道
        cfg: 预报参数
        climatology: (K,) 气候平均
        max_workers: 线程数
        segment_rows: 每段行数，多个模型对比时取最大 n₀ 对应的段长

    Returns:
        ForecastScore: 时效 0..horizon 的 RMSE 和 ANCR

    Raises:
        ContractViolationError: 片段不足
        BlowUpError: 发散成员超过允许比例
    """
    truth = np.asarray(truth, dtype=float)
    climatology = np.asarray(climatology, dtype=float)
    n_steps = steps_per_interval(cfg.horizon, model.delta, what="horizon")
    n0 = model.history_length
    segments = truth_segments(truth, cfg.n_segments, n0, n_steps, segment_rows)

    def work(item: Tuple[int, Tuple[np.ndarray, np.ndarray]]) -> Tuple[np.ndarray, EnsembleRun]:
        index, (window, future) = item
        run = model.ensemble(window, n_steps, member_seeds(cfg.seed, index, cfg.ensemble_size))
        mean = np.vstack([window[-1][None, :], run.ensemble_mean()])
        return mean, run

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        results = list(pool.map(work, enumerate(segments)))

    excluded = {i: sorted(run.blowup_steps) for i, (_, run) in enumerate(results) if run.n_excluded}
    n_excluded = sum(run.n_excluded for _, run in results)
    n_members = cfg.n_segments * cfg.ensemble_size
    if n_excluded:
        logger.warning(f"{model.name} N_ens={cfg.ensemble_size}: {n_excluded}/{n_members} 个成员发散已剔除")
    if n_excluded > cfg.max_blowup_fraction * n_members:
        first = min(min(run.blowup_steps.values()) for _, run in results if run.blowup_steps)
        raise BlowUpError(
            f"{model.name} 发散成员 {n_excluded}/{n_members} 超过允许比例 {cfg.max_blowup_fraction:.2%}",
            step=first,
            details={"n_excluded": n_excluded, "n_members": n_members},
        )

    means = np.stack([mean for mean, _ in results])
    targets = np.stack([np.vstack([window[-1][None, :], future]) for window, future in segments])
    valid = np.all(np.isfinite(means), axis=(1, 2))
    means, targets = means[valid], targets[valid]

    rmse = np.sqrt(np.mean((means - targets) ** 2, axis=(0, 2)))
    ancr = anomaly_correlation(means, targets, climatology).mean(axis=0)
    leads = np.arange(n_steps + 1) * model.delta

    logger.info(
        f"集合预报完成: 模型={model.name}, N_ens={cfg.ensemble_size}, 片段={int(valid.sum())}/{cfg.n_segments}, "
        f"RMSE(末)={rmse[-1]:.4f}, ANCR(末)={ancr[-1]:.4f}"
    )
    return ForecastScore(
        model=model.name,
        ensemble_size=cfg.ensemble_size,
        leads=leads,
        rmse=rmse,
        ancr=ancr,
        n_segments=int(valid.sum()),
        n_members=n_members,
        n_excluded=n_excluded,
        excluded=excluded,
    )


def crossing_lead(score: ForecastScore, level: float = DEFAULT_ANCR_LEVEL) -> Optional[float]:
    """ANCR 首次低于 level 的时效，始终不低于时返回 None"""
    below = np.flatnonzero(score.ancr < level)
    if below.size == 0:
        return None
    return float(score.leads[below[0]])


def climatology(x_obs: np.ndarray) -> np.ndarray:
    """各分量的时间平均"""
    return np.asarray(x_obs, dtype=float).mean(axis=0)
