"""动力系统基础数据模型"""

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..processors.error_handler import ContractViolationError


class L96Config(BaseModel):
    """两尺度 Lorenz 96 系统参数

    默认值为 (ε, K, J, F, h_x, h_y) = (0.5, 18, 20, 10, -1, 1)，积分步长 0.001。
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    K: int = Field(default=18, ge=4, description="可解变量维数")
    J: int = Field(default=20, ge=1, description="每个可解变量对应的不可解变量数")
    F: float = Field(default=10.0, description="外强迫")
    eps: float = Field(default=0.5, gt=0.0, description="时间尺度分离参数 ε")
    h_x: float = Field(default=-1.0, description="y 对 x 的耦合系数")
    h_y: float = Field(default=1.0, description="x 对 y 的耦合系数")
    dt: float = Field(default=0.001, gt=0.0, description="积分步长")
    spinup: float = Field(default=100.0, ge=0.0, description="丢弃的初始时段")
    seed: int = Field(default=0, ge=0, description="初始条件随机种子")


@dataclass
class FullState:
    """全系统状态：x 长度 K，y 形状 (J, K)"""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 1 or self.y.ndim != 2 or self.y.shape[1] != self.x.shape[0]:
            raise ContractViolationError(
                "FullState 维度不一致",
                {"x_shape": self.x.shape, "y_shape": self.y.shape},
            )
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ContractViolationError("FullState 含非有限值")

    @property
    def K(self) -> int:
        return int(self.x.shape[0])

    @property
    def J(self) -> int:
        return int(self.y.shape[0])

    def pack(self) -> np.ndarray:
        """打包为一维向量 [x, y 按列展开]

        列优先展开使得 y_{j+J,k} = y_{j,k+1} 恰为相邻元素。
        """
        return np.concatenate([self.x, self.y.ravel(order="F")])

    @classmethod
    def unpack(cls, vec: np.ndarray, K: int, J: int) -> "FullState":
        """由一维向量还原状态"""
        vec = np.asarray(vec, dtype=float)
        return cls(x=vec[:K].copy(), y=vec[K:].reshape((J, K), order="F").copy())

    def shift(self, k: int = 1) -> "FullState":
        """空间平移（x 和 y 的列同时循环移位）"""
        return FullState(x=np.roll(self.x, k), y=np.roll(self.y, k, axis=1))


@dataclass
class EnsembleRun:
    """集合模拟结果

    Attributes:
        x: (n_members, n_steps, K) 生成的状态，发散成员自发散步起为 NaN
        alive: (n_members,) 未发散的成员
        blowup_steps: 成员下标 -> 发散步序号
    """

    x: np.ndarray
    alive: np.ndarray
    blowup_steps: Dict[int, int] = field(default_factory=dict)

    @property
    def n_members(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_excluded(self) -> int:
        return int(np.sum(~self.alive))

    def ensemble_mean(self) -> np.ndarray:
        """存活成员的均值，(n_steps, K)；无存活成员时为 NaN"""
        if not np.any(self.alive):
            return np.full(self.x.shape[1:], np.nan)
        return self.x[self.alive].mean(axis=0)


@dataclass
class SeriesSet:
    """等间隔采样的多元时间序列

    Attributes:
        delta: 采样间隔 δ
        x_obs: (N, K) 可解变量观测
        z: (N-1, K) 离散不可解趋势，z[i] 对应时刻 i+1
        xi: (N-1, K) 新息序列，与 z 对齐
        rx: (N-1, K) R_δ(x^i)，由提取 z 时一并给出
    """

    delta: float
    x_obs: np.ndarray
    z: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None
    rx: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ContractViolationError(f"delta 必须为正: {self.delta}")
        self.x_obs = np.asarray(self.x_obs, dtype=float)
        if self.x_obs.ndim != 2:
            raise ContractViolationError("x_obs 必须是 (N, K) 数组", {"shape": self.x_obs.shape})
        for name in ("z", "xi", "rx"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.asarray(value, dtype=float)
            if value.shape != (self.x_obs.shape[0] - 1, self.x_obs.shape[1]):
                raise ContractViolationError(
                    f"{name} 形状必须为 (N-1, K)",
                    {"expected": (self.x_obs.shape[0] - 1, self.x_obs.shape[1]), "actual": value.shape},
                )
            setattr(self, name, value)

    @property
    def N(self) -> int:
        return int(self.x_obs.shape[0])

    @property
    def K(self) -> int:
        return int(self.x_obs.shape[1])

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N) * self.delta

    def window(self, start: int, stop: Optional[int] = None) -> "SeriesSet":
        """截取 x 的 [start, stop) 行，z、xi、rx 同步截取"""
        stop = self.N if stop is None else min(stop, self.N)

        def cut(arr: Optional[np.ndarray]) -> Optional[np.ndarray]:
            return None if arr is None else arr[start : stop - 1]

        return SeriesSet(
            delta=self.delta,
            x_obs=self.x_obs[start:stop],
            z=cut(self.z),
            xi=cut(self.xi),
            rx=cut(self.rx),
        )

    def head(self, n: int) -> "SeriesSet":
        """截取前 n 行"""
        return self.window(0, n)

    def permute_components(self, order: np.ndarray) -> "SeriesSet":
        """按给定顺序重排分量"""

        def perm(arr: Optional[np.ndarray]) -> Optional[np.ndarray]:
            return None if arr is None else arr[:, order]

        return SeriesSet(
            delta=self.delta,
            x_obs=self.x_obs[:, order],
            z=perm(self.z),
            xi=perm(self.xi),
            rx=perm(self.rx),
        )
