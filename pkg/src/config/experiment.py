"""实验配置 - 单个 JSON 文档描述一次完整的降阶实验"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.narmax import FitOptions, NarmaxStructure, paper_structure
from ..core.stats import StatsOptions
from ..dynamics.base import L96Config
from ..dynamics.lorenz96 import steps_per_interval
from ..processors.error_handler import ConfigurationError, ReductionError


class PolyarSection(BaseModel):
    """POLYAR 基线配置"""

    model_config = ConfigDict(extra="forbid")

    degree: int = Field(default=5, ge=0, le=12, description="多项式次数")


class ReductionSection(BaseModel):
    """截断模型单步映射配置"""

    model_config = ConfigDict(extra="forbid")

    scheme: Literal["euler", "rk2", "rk4"] = Field(default="rk4", description="R_δ 使用的单步格式")


class ForecastSection(BaseModel):
    """集合预报配置"""

    model_config = ConfigDict(extra="forbid")

    n_segments: int = Field(default=500, ge=1, description="真值片段数")
    horizon: float = Field(default=10.0, gt=0.0, description="每段预报时长")
    ensemble_sizes: List[int] = Field(default_factory=lambda: [1, 5, 20], min_length=1, description="集合规模")
    seed: Optional[int] = Field(default=None, ge=0, description="预报随机种子，缺省时由主种子派生")

    @field_validator("ensemble_sizes")
    @classmethod
    def validate_sizes(cls, v: List[int]) -> List[int]:
        if any(n < 1 for n in v):
            raise ValueError(f"集合规模必须 ≥ 1: {v}")
        return sorted(set(v))


class PipelineConfig(BaseModel):
    """实验配置

    narmax 为 null 时按 δ 取默认结构（仅支持 δ = 0.01 和 0.05）。
    model.seed 由顶层 seed 覆盖。
    """

    model_config = ConfigDict(extra="forbid")

    model: L96Config = Field(default_factory=L96Config)
    delta: float = Field(default=0.05, gt=0.0, description="观测间隔 δ")
    n_obs: int = Field(default=100_000, ge=2, description="观测行数")
    seed: int = Field(default=0, ge=0, description="主随机种子")
    narmax: Optional[NarmaxStructure] = Field(default=None, description="NARMAX 结构")
    polyar: PolyarSection = Field(default_factory=PolyarSection)
    reduction: ReductionSection = Field(default_factory=ReductionSection)
    fit: FitOptions = Field(default_factory=FitOptions)
    stats: StatsOptions = Field(default_factory=StatsOptions)
    forecast: ForecastSection = Field(default_factory=ForecastSection)
    output_dir: str = Field(default="./output", description="产物目录")

    @model_validator(mode="after")
    def validate_consistency(self) -> "PipelineConfig":
        try:
            steps_per_interval(self.delta, self.model.dt)
            steps_per_interval(self.forecast.horizon, self.delta, what="horizon")
            if self.narmax is None:
                paper_structure(self.delta)
        except ReductionError as e:
            raise ValueError(e.message) from None
        if self.stats.component >= self.model.K:
            raise ValueError(f"stats.component={self.stats.component} 超出范围 K={self.model.K}")
        return self

    def narmax_structure(self) -> NarmaxStructure:
        return self.narmax if self.narmax is not None else paper_structure(self.delta)

    def l96(self) -> L96Config:
        """带主种子的系统参数"""
        return self.model.model_copy(update={"seed": self.seed})

    @property
    def total_time(self) -> float:
        """生成数据所需的积分时长（含 spinup）"""
        return self.model.spinup + (self.n_obs - 1) * self.delta

    @property
    def forecast_seed(self) -> int:
        return self.forecast.seed if self.forecast.seed is not None else self.seed


# 规模预设: (观测行数, 预报片段数)
SCALE_PRESETS: Dict[str, Dict[str, int]] = {
    "paper": {"n_obs": 500_000, "n_segments": 10_000},
    "desk": {"n_obs": 100_000, "n_segments": 500},
}


def apply_overrides(
    cfg: PipelineConfig,
    scale: Optional[str] = None,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    delta: Optional[float] = None,
) -> PipelineConfig:
    """应用命令行覆盖项并重新校验"""
    data = cfg.model_dump()
    if scale is not None:
        if scale not in SCALE_PRESETS:
            raise ConfigurationError(f"未知规模预设: {scale}，支持: {sorted(SCALE_PRESETS)}")
        preset = SCALE_PRESETS[scale]
        data["n_obs"] = preset["n_obs"]
        data["forecast"]["n_segments"] = preset["n_segments"]
    if seed is not None:
        data["seed"] = seed
    if output_dir is not None:
        data["output_dir"] = output_dir
    if delta is not None:
        data["delta"] = delta
        data["narmax"] = None
    return _validate(data, "命令行覆盖")


def _validate(data: Dict[str, Any], source: str) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        fields = [
            {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in e.errors(include_url=False)
        ]
        lines = "; ".join(f"{f['field']}: {f['message']}" for f in fields)
        raise ConfigurationError(f"配置无效（{source}）: {lines}", {"errors": fields}) from e


def load_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """读取并校验实验配置，未给出路径时使用默认配置

    Raises:
        ConfigurationError: 文件不存在、不是合法 JSON 或字段校验失败
    """
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"配置文件不存在: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"配置文件不是合法 JSON: {e}", {"path": str(path)}) from e
    except UnicodeDecodeError as e:
        raise ConfigurationError(f"配置文件不是 UTF-8 文本: {e}", {"path": str(path)}) from e
    except OSError as e:
        raise ConfigurationError(f"无法读取配置文件: {e}", {"path": str(path)}) from e
    if not isinstance(data, dict):
        raise ConfigurationError("配置文件顶层必须是对象", {"path": str(path)})
    return _validate(data, str(path))


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(cfg: PipelineConfig) -> str:
    """配置的 SHA-256（不含 output_dir）"""
    payload = cfg.model_dump(mode="json", exclude={"output_dir"})
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def data_config_hash(cfg: PipelineConfig) -> str:
    """只依赖数据生成参数 (model, delta, n_obs, seed) 的哈希"""
    payload = cfg.model_dump(mode="json", include={"model", "delta", "n_obs", "seed"})
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
