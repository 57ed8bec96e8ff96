"""离散 NARMAX 模型 - Φ 求值、残差、条件对数似然、拟合与约化系统模拟

模型（各空间分量独立、参数共享）:

    z^n = Φ^n + ξ^n
    Φ^n = μ + Σ a_j z^{n-j} + Σ Σ b_{j,l} (x^{n-j})^l + Σ Σ c_{j,l} (R_δ(x^{n-j}))^l + Σ d_j ξ^{n-j}

参数向量布局: [μ, a_1..a_p, b (按 j 再按 l), c (按 j 再按 l), d_1..d_q]。
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.signal import lfilter

from ..dynamics.base import EnsembleRun, SeriesSet
from ..dynamics.reduction import ReducedMap, reduced_increment, with_discrepancy
from ..processors.error_handler import (
    BlowUpError,
    ConfigurationError,
    ContractViolationError,
    DegenerateDataError,
    InsufficientDataError,
    NumericalError,
)
from .optimizer import OptProblem, bfgs_maximize, least_squares

SeedLike = Union[int, np.random.SeedSequence]

# 系数路径收敛判据：最后两次拟合的变化不超过相对容差或若干个标准误
CONVERGENCE_RELATIVE = 0.05
CONVERGENCE_STD_ERRORS = 3.0


class NarmaxStructure(BaseModel):
    """NARMAX 模型结构 (p, r, s, q, d_x, d_R)"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    p: int = Field(default=0, ge=0, description="z 的自回归阶数")
    r: int = Field(default=0, ge=0, description="x 的滞后个数")
    s: int = Field(default=0, ge=0, description="R_δ(x) 的滞后个数")
    q: int = Field(default=0, ge=0, description="滑动平均阶数")
    d_x: int = Field(default=0, ge=0, description="x 的最高次幂")
    d_R: int = Field(default=0, ge=0, description="R_δ(x) 的最高次幂")

    @property
    def n_linear(self) -> int:
        """μ, a, b, c 的参数个数"""
        return 1 + self.p + self.r * self.d_x + self.s * self.d_R

    @property
    def n_params(self) -> int:
        """不含 σ² 的参数总数"""
        return self.n_linear + self.q

    @property
    def history_length(self) -> int:
        """初始化所需历史长度 n₀ = max{1, p, r, s, 2q} + 1"""
        return max(1, self.p, self.r, self.s, 2 * self.q) + 1

    @property
    def residual_start(self) -> int:
        """z 数组中第一个由数据计算残差的下标，之前的 ξ 取 0"""
        return max(0, self.p, self.r - 1, self.s - 1, self.q)

    def term_names(self) -> List[str]:
        """参数名，顺序与参数向量一致"""
        names = ["mu"]
        names += [f"a{j}" for j in range(1, self.p + 1)]
        names += [f"b{j}_{l}" for j in range(1, self.r + 1) for l in range(1, self.d_x + 1)]
        names += [f"c{j}_{l}" for j in range(1, self.s + 1) for l in range(1, self.d_R + 1)]
        names += [f"d{j}" for j in range(1, self.q + 1)]
        return names

    def label(self) -> str:
        return f"(p,r,s,q)=({self.p},{self.r},{self.s},{self.q}), (d_x,d_R)=({self.d_x},{self.d_R})"


def term_names(structure: NarmaxStructure) -> List[str]:
    """参数名列表：mu, a{j}, b{j}_{l}, c{j}_{l}, d{j}"""
    return structure.term_names()


def history_length(structure: NarmaxStructure) -> int:
    """n₀ = max{1, p, r, s, 2q} + 1"""
    return structure.history_length


def _as_matrix(values: Any) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2:
        return arr
    if arr.size == 0:
        return arr.reshape(0, 0)
    return np.atleast_2d(arr)


@dataclass
class NarmaxParams:
    """NARMAX 参数

    Attributes:
        mu: 常数项 μ
        a: (p,) z 的自回归系数
        b: (r, d_x) x 的多项式系数，b[j-1, l-1] = b_{j,l}
        c: (s, d_R) R_δ(x) 的多项式系数
        d: (q,) 滑动平均系数
        sigma2: 新息方差 σ²
    """

    mu: float
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    sigma2: float

    def __post_init__(self) -> None:
        self.mu = float(self.mu)
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        self.b = _as_matrix(self.b)
        self.c = _as_matrix(self.c)
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        self.sigma2 = float(self.sigma2)
        if not self.sigma2 > 0:
            raise ContractViolationError(f"σ² 必须为正: {self.sigma2}")

    def check(self, structure: NarmaxStructure) -> None:
        """校验参数维度与结构一致"""
        expected = {
            "a": (structure.p,),
            "b": (structure.r, structure.d_x),
            "c": (structure.s, structure.d_R),
            "d": (structure.q,),
        }
        for name, shape in expected.items():
            value = getattr(self, name)
            # 空矩阵只比较元素个数
            if value.size == 0 and int(np.prod(shape)) == 0:
                continue
            if value.shape != shape:
                raise ContractViolationError(
                    f"参数 {name} 形状与结构不符",
                    {"expected": shape, "actual": value.shape, "structure": structure.label()},
                )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.mu], self.a, self.b.ravel(), self.c.ravel(), self.d])

    @classmethod
    def from_vector(cls, structure: NarmaxStructure, vec: np.ndarray, sigma2: float) -> "NarmaxParams":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.shape[0] != structure.n_params:
            raise ContractViolationError(
                f"参数向量长度 {vec.shape[0]} 与结构要求 {structure.n_params} 不符"
            )
        p, r, s = structure.p, structure.r, structure.s
        i = 1
        a = vec[i : i + p]
        i += p
        b = vec[i : i + r * structure.d_x].reshape(r, structure.d_x)
        i += r * structure.d_x
        c = vec[i : i + s * structure.d_R].reshape(s, structure.d_R)
        i += s * structure.d_R
        d = vec[i:]
        return cls(mu=vec[0], a=a, b=b, c=c, d=d, sigma2=sigma2)

    @classmethod
    def zeros(cls, structure: NarmaxStructure, sigma2: float = 1.0) -> "NarmaxParams":
        return cls.from_vector(structure, np.zeros(structure.n_params), sigma2)

    def as_dict(self, structure: NarmaxStructure) -> Dict[str, float]:
        """参数名 -> 值（含 sigma2）"""
        out = dict(zip(structure.term_names(), map(float, self.to_vector())))
        out["sigma2"] = self.sigma2
        return out


@dataclass
class NarmaxHistory:
    """Φ 求值所需的滞后值，第 0 维为滞后（最近的在前）

    z[j-1] = z^{n-j}, x[j-1] = x^{n-j}, xi[j-1] = ξ^{n-j}, rx[j-1] = R_δ(x^{n-j})。
    其余维度（如空间分量）逐元素广播。
    """

    z: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    rx: Optional[np.ndarray] = None


def _lags(values: Optional[np.ndarray], need: int, name: str) -> np.ndarray:
    if need == 0:
        return np.zeros((0,))
    if values is None:
        raise ContractViolationError(f"历史缺少 {name}")
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0 or arr.shape[0] < need:
        have = 0 if arr.ndim == 0 else arr.shape[0]
        raise ContractViolationError(f"{name} 历史不足: 需要 {need} 个滞后, 实际 {have}")
    return arr[:need]


def _powers(values: np.ndarray, degree: int) -> np.ndarray:
    """(L, ...) -> (L, ..., degree)，末维为 1..degree 次幂"""
    return values[..., None] ** np.arange(1, degree + 1)


def _phi_from_lags(
    st: NarmaxStructure,
    th: NarmaxParams,
    z: np.ndarray,
    x: np.ndarray,
    rx: np.ndarray,
    xi: np.ndarray,
) -> Union[float, np.ndarray]:
    out: Union[float, np.ndarray] = th.mu
    if st.p:
        out = out + np.tensordot(th.a, z[: st.p], axes=(0, 0))
    if st.r and st.d_x:
        out = out + np.einsum("jl,j...l->...", th.b, _powers(x[: st.r], st.d_x))
    if st.s and st.d_R:
        out = out + np.einsum("jl,j...l->...", th.c, _powers(rx[: st.s], st.d_R))
    if st.q:
        out = out + np.tensordot(th.d, xi[: st.q], axes=(0, 0))
    return out


def phi(
    st: NarmaxStructure,
    th: NarmaxParams,
    hist: NarmaxHistory,
    reduced: Optional[ReducedMap] = None,
) -> Union[float, np.ndarray]:
    """计算 Φ^n 的确定性部分

    Args:
        st: 模型结构
        th: 参数
        hist: 滞后值，需含 p 个 z、max(r, s) 个 x、q 个 ξ
        reduced: 未给出 hist.rx 且 s > 0 时用于计算 R_δ(x)

    Returns:
        Φ^n，形状与滞后值除第 0 维外的形状相同

    Raises:
        ContractViolationError: 历史不足或参数维度不符
    """
    th.check(st)
    z = _lags(hist.z, st.p, "z")
    x = _lags(hist.x, max(st.r, st.s), "x")
    if st.s and hist.rx is None:
        if reduced is None:
            raise ContractViolationError("s > 0 时需要 R_δ(x) 滞后或单步映射")
        rx = reduced_increment(reduced, x[: st.s])
    else:
        rx = _lags(hist.rx, st.s, "R_δ(x)")
    xi = _lags(hist.xi, st.q, "ξ")
    return _phi_from_lags(st, th, z, x, rx, xi)


# ---------------------------------------------------------------------------
# 残差与似然
# ---------------------------------------------------------------------------


@dataclass
class _Design:
    """残差窗口上的回归量 (n, K, n_linear) 与目标 (n, K)"""

    start: int
    features: np.ndarray
    target: np.ndarray

    @property
    def n_rows(self) -> int:
        return int(self.target.shape[0])

    @property
    def n_eff(self) -> int:
        return int(self.target.size)


def _require_series(st: NarmaxStructure, series: SeriesSet, reduced: Optional[ReducedMap]) -> SeriesSet:
    """保证序列带有 z，且 s > 0 时带有 R_δ(x)"""
    if series.z is None:
        raise ContractViolationError("序列缺少 z，请先提取离散不可解趋势")
    if st.s and series.rx is None:
        if reduced is None:
            raise ContractViolationError("s > 0 时序列需要 R_δ(x) 或提供单步映射")
        rx = reduced_increment(reduced, series.x_obs[:-1])
        return SeriesSet(delta=series.delta, x_obs=series.x_obs, z=series.z, xi=series.xi, rx=rx)
    return series


def _build_design(st: NarmaxStructure, series: SeriesSet) -> _Design:
    Z, X, RX = series.z, series.x_obs, series.rx
    M, K = Z.shape
    start = st.residual_start
    if M <= start:
        return _Design(start=start, features=np.zeros((0, K, st.n_linear)), target=np.zeros((0, K)))

    n = M - start
    cols = [np.ones((n, K))]
    for j in range(1, st.p + 1):
        cols.append(Z[start - j : M - j])
    for j in range(1, st.r + 1):
        base = X[start + 1 - j : M + 1 - j]
        cols.extend(base**l for l in range(1, st.d_x + 1))
    for j in range(1, st.s + 1):
        base = RX[start + 1 - j : M + 1 - j]
        cols.extend(base**l for l in range(1, st.d_R + 1))
    return _Design(start=start, features=np.stack(cols, axis=-1), target=Z[start:].copy())


def _ma_denominator(st: NarmaxStructure, vec: np.ndarray) -> np.ndarray:
    return np.concatenate([[1.0], vec[st.n_linear :]])


def _window_residuals(st: NarmaxStructure, vec: np.ndarray, design: _Design) -> np.ndarray:
    """窗口内的 ξ，ξ^n = e^n - Σ d_j ξ^{n-j}，窗口前的 ξ 为 0"""
    e = design.target - design.features @ vec[: st.n_linear]
    if st.q == 0 or design.n_rows == 0:
        return e
    return lfilter([1.0], _ma_denominator(st, vec), e, axis=0)


def _residual_jacobian(st: NarmaxStructure, vec: np.ndarray, design: _Design) -> Tuple[np.ndarray, np.ndarray]:
    """窗口内的 ξ 及其对参数向量的导数 (n, K, n_params)

    MA 部分的导数满足与 ξ 相同的递推，用同一滤波器前向累积。
    """
    xi = _window_residuals(st, vec, design)
    if st.q == 0:
        return xi, -design.features
    den = _ma_denominator(st, vec)
    cols = [lfilter([1.0], den, -design.features, axis=0)]
    for j in range(1, st.q + 1):
        lagged = np.zeros_like(xi)
        lagged[j:] = xi[:-j]
        cols.append(lfilter([1.0], den, -lagged, axis=0)[..., None])
    return xi, np.concatenate(cols, axis=-1)


def _sum_squares(st: NarmaxStructure, vec: np.ndarray, design: _Design) -> Tuple[float, np.ndarray, np.ndarray]:
    """残差平方和 S 及其对参数向量的梯度"""
    xi, jac = _residual_jacobian(st, vec, design)
    S = float(np.sum(xi * xi))
    grad = 2.0 * np.einsum("nk,nkp->p", xi, jac)
    return S, grad, xi


def _standard_errors(st: NarmaxStructure, vec: np.ndarray, design: _Design, sigma2: float) -> Dict[str, float]:
    """Gauss-Newton 近似的渐近标准误 sqrt(σ²·diag((JᵀJ)⁻¹))，σ² 取 σ²·sqrt(2/n)"""
    _, jac = _residual_jacobian(st, vec, design)
    J = jac.reshape(-1, st.n_params)
    cov = sigma2 * np.linalg.pinv(J.T @ J)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    out = {name: float(v) for name, v in zip(st.term_names(), se)}
    out["sigma2"] = float(sigma2 * np.sqrt(2.0 / design.n_eff))
    return out


def _residual_core(st: NarmaxStructure, th: NarmaxParams, series: SeriesSet) -> np.ndarray:
    design = _build_design(st, series)
    xi = np.zeros_like(series.z)
    if design.n_rows:
        xi[design.start :] = _window_residuals(st, th.to_vector(), design)
    return xi


def effective_count(st: NarmaxStructure, series: SeriesSet) -> int:
    """似然中的残差个数 K·(N-1-b)"""
    return max(0, series.N - 1 - st.residual_start) * series.K


def residuals(
    st: NarmaxStructure,
    th: NarmaxParams,
    series: SeriesSet,
    reduced: Optional[ReducedMap] = None,
) -> np.ndarray:
    """由数据递推计算新息 ξ^n = z^n - Φ^n

    Args:
        st: 模型结构
        th: 参数
        series: 含 z 的序列（s > 0 时还需 R_δ(x) 或 reduced）
        reduced: 单步映射，仅用于补算 R_δ(x)

    Returns:
        np.ndarray: (N-1, K)，与 z 对齐，起始窗口内为 0

    Raises:
        ContractViolationError: 缺少 z
        InsufficientDataError: N ≤ n₀
    """
    th.check(st)
    series = _require_series(st, series, reduced)
    if series.N <= st.history_length:
        raise InsufficientDataError(
            f"序列长度 {series.N} 不超过历史长度 n₀={st.history_length}",
            {"N": series.N, "n0": st.history_length},
        )
    return _residual_core(st, th, series)


def log_likelihood(
    st: NarmaxStructure,
    th: NarmaxParams,
    series: SeriesSet,
    profile: bool = False,
    reduced: Optional[ReducedMap] = None,
) -> Tuple[float, np.ndarray]:
    """条件对数似然 l = -S/(2σ²) - (n/2)·ln σ² 及其梯度

    n 为参与求和的残差个数，见 effective_count。

    Args:
        st: 模型结构
        th: 参数（profile=False 时使用 th.sigma2）
        series: 含 z 的序列
        profile: 为 True 时以 σ̂² = S/n 代入

    Returns:
        Tuple[float, np.ndarray]: 似然值和对参数向量（不含 σ²）的梯度

    Raises:
        NumericalError: σ² ≤ 0
        DegenerateDataError: profile 模式下残差全为 0
    """
    if not th.sigma2 > 0:
        raise NumericalError(f"σ² 必须为正: {th.sigma2}", error_code="DOMAIN_ERROR")
    th.check(st)
    series = _require_series(st, series, reduced)
    design = _build_design(st, series)
    if design.n_rows == 0:
        raise InsufficientDataError("残差窗口为空", {"N": series.N, "start": design.start})
    S, grad_S, _ = _sum_squares(st, th.to_vector(), design)
    n = design.n_eff
    if profile:
        if S <= 0:
            raise DegenerateDataError("残差平方和为 0，无法估计 σ²")
        value = -0.5 * n - 0.5 * n * np.log(S / n)
        return float(value), -(n / (2.0 * S)) * grad_S
    value = -S / (2.0 * th.sigma2) - 0.5 * n * np.log(th.sigma2)
    return float(value), -grad_S / (2.0 * th.sigma2)


# ---------------------------------------------------------------------------
# 拟合
# ---------------------------------------------------------------------------


class FitOptions(BaseModel):
    """拟合选项"""

    model_config = ConfigDict(extra="forbid")

    gtol: float = Field(default=1e-6, gt=0.0, description="梯度范数停止阈值")
    max_iters: int = Field(default=500, ge=1, description="最大迭代次数")
    method: Literal["auto", "bfgs", "lstsq"] = Field(
        default="auto", description="auto: q=0 用最小二乘，否则用 BFGS"
    )
    init: Literal["default", "narx"] = Field(
        default="default", description="default: a₁=0.5、μ=均值; narx: q=0 最小二乘解"
    )
    component: Optional[int] = Field(default=None, ge=0, description="仅用单个分量拟合")


@dataclass
class FitReport:
    """拟合结果

    grad_norm 为每个残差平均的剖面对数似然在标准化坐标下的梯度范数。
    """

    params: NarmaxParams
    structure: NarmaxStructure
    loglik: float
    grad_norm: float
    iterations: int
    converged: bool
    method: str
    n_obs: int
    message: str = ""
    warnings: List[str] = field(default_factory=list)
    std_errors: Dict[str, float] = field(default_factory=dict)

    def summary(self) -> Dict[str, Any]:
        return {
            "structure": self.structure.model_dump(),
            "coefficients": self.params.as_dict(self.structure),
            "std_errors": dict(self.std_errors),
            "loglik": self.loglik,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "method": self.method,
            "n_obs": self.n_obs,
            "message": self.message,
            "warnings": list(self.warnings),
        }


def _single_component(series: SeriesSet, component: int) -> SeriesSet:
    if component >= series.K:
        raise ConfigurationError(f"分量下标 {component} 超出范围 K={series.K}")
    return series.permute_components(np.array([component]))


def _initial_vector(st: NarmaxStructure, design: _Design, w_ls: np.ndarray, init: str) -> np.ndarray:
    vec = np.zeros(st.n_params)
    if init == "narx":
        vec[: st.n_linear] = w_ls
        return vec
    vec[0] = float(np.mean(design.target))
    if st.p >= 1:
        vec[1] = 0.5
    return vec


def ma_roots_check(th: NarmaxParams) -> Tuple[bool, np.ndarray]:
    """检查 MA 多项式 1 + d_1 B + ... + d_q B^q 是否可逆

    Returns:
        Tuple[bool, np.ndarray]: (所有根都在单位圆外, 根)
    """
    if th.d.size == 0 or not np.any(th.d):
        return True, np.zeros(0, dtype=complex)
    roots = np.roots(np.concatenate([th.d[::-1], [1.0]]))
    return bool(np.all(np.abs(roots) > 1.0)), roots


def fit(
    st: NarmaxStructure,
    series: SeriesSet,
    opts: Optional[FitOptions] = None,
    reduced: Optional[ReducedMap] = None,
) -> FitReport:
    """极大化条件对数似然估计参数

    σ² 解析剖面化。q = 0 时似然关于系数是二次的，MLE 即最小二乘解；
    q ≥ 1 时用 BFGS，目标按残差个数归一化并按回归量尺度预条件。

    Args:
        st: 模型结构
        series: 含 z 的序列
        opts: 拟合选项
        reduced: 单步映射，仅在序列缺少 R_δ(x) 时使用

    Returns:
        FitReport: 未收敛时 converged=False，不抛异常

    Raises:
        RankDeficiencyError: 回归量线性相关，列出相关项
        InsufficientDataError: 残差个数少于参数个数
        ConfigurationError: method="lstsq" 但 q > 0
    """
    opts = opts or FitOptions()
    series = _require_series(st, series, reduced)
    if opts.component is not None:
        series = _single_component(series, opts.component)
    design = _build_design(st, series)
    n = design.n_eff
    if n < st.n_params + 1:
        raise InsufficientDataError(
            f"残差个数 {n} 不足以估计 {st.n_params} 个参数",
            {"n_obs": n, "n_params": st.n_params},
        )

    names = st.term_names()
    A = design.features.reshape(-1, st.n_linear)
    y = design.target.reshape(-1)
    w_ls = least_squares(A, y, column_names=names[: st.n_linear])

    method = opts.method
    if method == "auto":
        method = "lstsq" if st.q == 0 else "bfgs"
    if method == "lstsq" and st.q > 0:
        raise ConfigurationError("最小二乘只适用于 q = 0 的结构", {"q": st.q})

    # 标准化坐标 θ = u / scale
    rms = np.sqrt(np.mean(A * A, axis=0))
    rms[rms == 0] = 1.0
    x0 = _initial_vector(st, design, w_ls, opts.init)
    s0 = float(np.sqrt(np.mean(_window_residuals(st, x0, design) ** 2)))
    scale = np.ones(st.n_params)
    scale[: st.n_linear] = rms / (s0 if s0 > 0 else 1.0)

    def objective(u: np.ndarray) -> Tuple[float, np.ndarray]:
        with np.errstate(over="ignore", invalid="ignore"):
            S, grad_S, _ = _sum_squares(st, u / scale, design)
        if not np.isfinite(S) or S <= 0 or not np.all(np.isfinite(grad_S)):
            return -np.inf, np.zeros_like(u)
        return -0.5 - 0.5 * np.log(S / n), -grad_S / (2.0 * S) / scale

    if method == "lstsq":
        vec = np.concatenate([w_ls, np.zeros(st.q)])
        _, g = objective(vec * scale)
        grad_norm = float(np.linalg.norm(g))
        iterations, converged, message = 0, True, "最小二乘闭式解"
    else:
        result = bfgs_maximize(
            OptProblem(dim=st.n_params, objective=objective, tolerance=opts.gtol, max_iters=opts.max_iters),
            x0 * scale,
        )
        vec = result.x / scale
        grad_norm, iterations = result.grad_norm, result.iterations
        converged, message = result.converged, result.message

    S, _, _ = _sum_squares(st, vec, design)
    if S <= 0:
        raise DegenerateDataError("残差平方和为 0，无法估计 σ²")
    sigma2 = S / n
    params = NarmaxParams.from_vector(st, vec, sigma2)
    loglik = float(-0.5 * n - 0.5 * n * np.log(sigma2))

    warnings: List[str] = []
    invertible, roots = ma_roots_check(params)
    if not invertible:
        msg = f"MA 多项式不可逆，根模长 {np.round(np.abs(roots), 4).tolist()}"
        warnings.append(msg)
        logger.warning(msg)
    if not converged:
        msg = f"拟合未收敛: {message}, |g|={grad_norm:.3e}"
        warnings.append(msg)
        logger.warning(msg)

    logger.info(
        f"NARMAX 拟合完成 {st.label()}: 方法={method}, 迭代={iterations}, "
        f"l={loglik:.6g}, σ²={sigma2:.4g}, n={n}"
    )
    return FitReport(
        params=params,
        structure=st,
        loglik=loglik,
        grad_norm=grad_norm,
        iterations=iterations,
        converged=converged,
        method=method,
        n_obs=n,
        message=message,
        warnings=warnings,
        std_errors=_standard_errors(st, vec, design, sigma2),
    )


@dataclass
class ConvergenceDiagnostic:
    """系数随数据量变化的路径

    verdicts 中 None 表示只有一次拟合，无法判断。
    """

    fractions: List[float]
    sizes: List[int]
    paths: Dict[str, List[float]]
    verdicts: Dict[str, Optional[bool]]
    reports: List[FitReport]
    std_errors: Dict[str, List[float]] = field(default_factory=dict)

    def summary(self) -> Dict[str, Any]:
        return {
            "fractions": self.fractions,
            "sizes": self.sizes,
            "paths": self.paths,
            "std_errors": self.std_errors,
            "verdicts": self.verdicts,
        }


def convergence_diagnostic(
    st: NarmaxStructure,
    series: SeriesSet,
    fractions: Sequence[float],
    opts: Optional[FitOptions] = None,
    reduced: Optional[ReducedMap] = None,
) -> ConvergenceDiagnostic:
    """在嵌套前缀上重复拟合，报告系数路径和收敛判定

    判定：最后两次拟合的变化不超过 max(5%·|最后值|, 3·SE)，SE 为倒数第二次拟合的渐近标准误。
    趋于 0 的多余项按标准误判定。
    """
    fr = [float(f) for f in fractions]
    if not fr or any(not 0.0 < f <= 1.0 for f in fr) or any(b <= a for a, b in zip(fr, fr[1:])):
        raise ContractViolationError(f"fractions 必须在 (0, 1] 内严格递增: {fr}")
    series = _require_series(st, series, reduced)

    sizes = [max(2, int(round(f * series.N))) for f in fr]
    reports = [fit(st, series.head(size), opts) for size in sizes]
    names = st.term_names() + ["sigma2"]
    paths = {name: [r.params.as_dict(st)[name] for r in reports] for name in names}
    std_errors = {name: [r.std_errors[name] for r in reports] for name in names}

    verdicts: Dict[str, Optional[bool]] = {}
    for name, path in paths.items():
        if len(path) < 2:
            verdicts[name] = None
            continue
        last, prev = path[-1], path[-2]
        se = std_errors[name][-2]
        verdicts[name] = abs(last - prev) <= max(CONVERGENCE_RELATIVE * abs(last), CONVERGENCE_STD_ERRORS * se)

    logger.info(f"收敛诊断完成: 规模 {sizes}, 未收敛系数 {[k for k, v in verdicts.items() if v is False]}")
    return ConvergenceDiagnostic(
        fractions=fr, sizes=sizes, paths=paths, verdicts=verdicts, reports=reports, std_errors=std_errors
    )


# ---------------------------------------------------------------------------
# 模拟
# ---------------------------------------------------------------------------


def _init_window(st: NarmaxStructure, th: NarmaxParams, reduced: ReducedMap, init: SeriesSet) -> SeriesSet:
    """补全初始窗口的 z、R_δ(x)、ξ"""
    if init.N < st.history_length:
        raise InsufficientDataError(
            f"初始窗口 {init.N} 行，少于 n₀={st.history_length}",
            {"N": init.N, "n0": st.history_length},
        )
    if init.K != reduced.K:
        raise ContractViolationError(f"初始窗口维数 {init.K} 与 K={reduced.K} 不符")
    if init.z is None or init.rx is None:
        filled = with_discrepancy(reduced, init)
        init = SeriesSet(
            delta=init.delta,
            x_obs=init.x_obs,
            z=init.z if init.z is not None else filled.z,
            rx=filled.rx,
            xi=init.xi,
        )
    if init.xi is None:
        init = SeriesSet(delta=init.delta, x_obs=init.x_obs, z=init.z, rx=init.rx, xi=_residual_core(st, th, init))
    return init


class _NarmaxStepper:
    """批量推进约化系统，状态带前导成员维 (n_members, K)"""

    def __init__(
        self,
        st: NarmaxStructure,
        th: NarmaxParams,
        reduced: ReducedMap,
        init: SeriesSet,
        n_members: int,
    ):
        self.st = st
        self.th = th
        self.reduced = reduced
        rx_all = np.vstack([init.rx, reduced.increment(init.x_obs[-1])[None, :]])

        def lags(rows: np.ndarray, count: int) -> np.ndarray:
            recent = rows[::-1][:count]
            return np.repeat(recent[:, None, :], n_members, axis=1)

        self.z = lags(init.z, st.p)
        self.x = lags(init.x_obs, st.r)
        self.rx = lags(rx_all, st.s)
        self.xi = lags(init.xi, st.q)
        self.x_cur = np.repeat(init.x_obs[-1][None, :], n_members, axis=0)
        self.rx_cur = np.repeat(rx_all[-1][None, :], n_members, axis=0)

    @staticmethod
    def _push(buf: np.ndarray, new: np.ndarray) -> np.ndarray:
        if buf.shape[0] == 0:
            return buf
        return np.concatenate([new[None], buf[:-1]], axis=0)

    def step(self, noise: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """推进一步，返回 (x^{n+1}, z^{n+1})"""
        z_new = _phi_from_lags(self.st, self.th, self.z, self.x, self.rx, self.xi) + noise
        x_new = self.x_cur + self.reduced.delta * (self.rx_cur + z_new)
        rx_new = self.reduced.increment(x_new)
        self.z = self._push(self.z, z_new)
        self.x = self._push(self.x, x_new)
        self.rx = self._push(self.rx, rx_new)
        self.xi = self._push(self.xi, noise)
        self.x_cur, self.rx_cur = x_new, rx_new
        return x_new, z_new

    def mask(self, dead: np.ndarray) -> None:
        """将发散成员的全部状态置为 NaN"""
        for name in ("z", "x", "rx", "xi"):
            getattr(self, name)[:, dead] = np.nan
        self.x_cur[dead] = np.nan
        self.rx_cur[dead] = np.nan


def _blown_up(x: np.ndarray, threshold: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return ~np.all(np.isfinite(x), axis=-1) | np.any(np.abs(x) > threshold, axis=-1)


def simulate(
    st: NarmaxStructure,
    th: NarmaxParams,
    reduced: ReducedMap,
    init: SeriesSet,
    n_steps: int,
    seed: SeedLike,
    threshold: float = 1e6,
) -> SeriesSet:
    """模拟约化随机系统

    x^{n+1} = x^n + δR_δ(x^n) + δz^{n+1}, z^{n+1} = Φ^{n+1} + ξ^{n+1}, ξ ~ N(0, σ²) 逐分量独立。

    Args:
        st: 模型结构
        th: 参数
        reduced: 单步映射
        init: 初始窗口（至少 n₀ 行），缺少的 z、ξ 由数据计算
        n_steps: 生成步数
        seed: 随机种子
        threshold: 发散阈值

    Returns:
        SeriesSet: 初始窗口后接生成的 n_steps 步，含 x、z、ξ、R_δ(x)

    Raises:
        BlowUpError: 轨道发散，附步序号
    """
    th.check(st)
    if n_steps < 0:
        raise ContractViolationError(f"步数不能为负: {n_steps}")
    init = _init_window(st, th, reduced, init)
    K = init.K
    noise = np.sqrt(th.sigma2) * np.random.default_rng(seed).standard_normal((n_steps, K))

    stepper = _NarmaxStepper(st, th, reduced, init, n_members=1)
    x_out = np.empty((n_steps, K))
    z_out = np.empty((n_steps, K))
    rx_out = np.empty((n_steps, K))
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            rx_out[n] = stepper.rx_cur[0]
            x_new, z_new = stepper.step(noise[n][None, :])
            if _blown_up(x_new, threshold)[0]:
                raise BlowUpError(f"NARMAX 模拟在第 {n + 1} 步发散", step=n + 1)
            x_out[n], z_out[n] = x_new[0], z_new[0]

    return SeriesSet(
        delta=init.delta,
        x_obs=np.vstack([init.x_obs, x_out]),
        z=np.vstack([init.z, z_out]),
        xi=np.vstack([init.xi, noise]),
        rx=np.vstack([init.rx, rx_out]),
    )


def simulate_ensemble(
    st: NarmaxStructure,
    th: NarmaxParams,
    reduced: ReducedMap,
    init: SeriesSet,
    n_steps: int,
    member_seeds: Sequence[SeedLike],
    threshold: float = 1e6,
) -> EnsembleRun:
    """从同一初始窗口批量模拟多个成员

    每个成员的噪声来自各自的种子；发散成员置为 NaN 并记录发散步，不中断其他成员。

    Returns:
        EnsembleRun: x 形状 (n_members, n_steps, K)，仅含生成部分
    """
    th.check(st)
    init = _init_window(st, th, reduced, init)
    n_members, K = len(member_seeds), init.K
    if n_members < 1:
        raise ContractViolationError("成员数必须 ≥ 1")
    sd = np.sqrt(th.sigma2)
    noise = np.stack([sd * np.random.default_rng(s).standard_normal((n_steps, K)) for s in member_seeds], axis=1)

    stepper = _NarmaxStepper(st, th, reduced, init, n_members=n_members)
    x_out = np.empty((n_members, n_steps, K))
    alive = np.ones(n_members, dtype=bool)
    blowup_steps: Dict[int, int] = {}
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            x_new, _ = stepper.step(noise[n])
            dead = _blown_up(x_new, threshold) & alive
            if np.any(dead):
                for m in np.flatnonzero(dead):
                    blowup_steps[int(m)] = n + 1
                alive &= ~dead
                stepper.mask(dead)
                x_new = stepper.x_cur
            x_out[:, n] = x_new
    return EnsembleRun(x=x_out, alive=alive, blowup_steps=blowup_steps)


# ---------------------------------------------------------------------------
# 参数文档与默认结构
# ---------------------------------------------------------------------------


class _CoefficientsDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mu: float
    a: List[float]
    b: List[List[float]]
    c: List[List[float]]
    d: List[float]


class _NarmaxDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    structure: NarmaxStructure
    coefficients: _CoefficientsDoc
    sigma2: float = Field(..., gt=0.0)
    meta: Dict[str, Any] = Field(default_factory=dict)


def to_document(st: NarmaxStructure, th: NarmaxParams, meta: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """序列化为 {structure, coefficients{mu,a,b,c,d}, sigma2, meta}"""
    th.check(st)
    return {
        "structure": st.model_dump(),
        "coefficients": {
            "mu": th.mu,
            "a": th.a.tolist(),
            "b": th.b.reshape(st.r, st.d_x).tolist(),
            "c": th.c.reshape(st.s, st.d_R).tolist(),
            "d": th.d.tolist(),
        },
        "sigma2": th.sigma2,
        "meta": dict(meta or {}),
    }


def from_document(doc: Dict[str, Any]) -> Tuple[NarmaxStructure, NarmaxParams, Dict[str, Any]]:
    """由参数文档还原结构、参数和元数据

    Raises:
        ContractViolationError: 文档字段缺失、多余或维度不符
    """
    try:
        parsed = _NarmaxDoc.model_validate(doc)
    except ValidationError as e:
        raise ContractViolationError("NARMAX 参数文档格式错误", {"errors": e.errors()}) from e
    st = parsed.structure
    co = parsed.coefficients
    th = NarmaxParams(
        mu=co.mu,
        a=np.array(co.a, dtype=float),
        b=np.array(co.b, dtype=float).reshape(st.r, st.d_x) if st.r * st.d_x else np.zeros((st.r, st.d_x)),
        c=np.array(co.c, dtype=float).reshape(st.s, st.d_R) if st.s * st.d_R else np.zeros((st.s, st.d_R)),
        d=np.array(co.d, dtype=float),
        sigma2=parsed.sigma2,
    )
    th.check(st)
    return st, th, parsed.meta


_PAPER_STRUCTURES: Dict[float, NarmaxStructure] = {
    0.01: NarmaxStructure(p=1, r=2, s=0, q=1, d_x=1, d_R=0),
    0.05: NarmaxStructure(p=1, r=1, s=1, q=0, d_x=3, d_R=1),
}

# 分量 x₁ 上的参考估计值
_PAPER_COEFFICIENTS: Dict[float, Dict[str, Any]] = {
    0.01: {"mu": 0.0115, "a": [0.9782], "b": [[-0.1271], [0.1132]], "c": [], "d": [0.9997], "sigma2": 0.0004},
    0.05: {
        "mu": 0.0556,
        "a": [0.8879],
        "b": [[-0.0712, -0.0002, 0.0002]],
        "c": [[-0.0084]],
        "d": [],
        "sigma2": 0.0284,
    },
}


def _paper_key(delta: float) -> float:
    for key in _PAPER_STRUCTURES:
        if abs(delta - key) <= 1e-9:
            return key
    raise ConfigurationError(
        f"δ={delta} 没有默认结构，请在配置中显式给出 narmax 结构",
        {"delta": delta, "known": sorted(_PAPER_STRUCTURES)},
    )


def paper_structure(delta: float) -> NarmaxStructure:
    """δ = 0.01 和 δ = 0.05 下选定的模型结构"""
    return _PAPER_STRUCTURES[_paper_key(delta)]


def paper_params(delta: float) -> NarmaxParams:
    """δ = 0.01 和 δ = 0.05 下的参考参数，用于对照"""
    key = _paper_key(delta)
    st = _PAPER_STRUCTURES[key]
    co = _PAPER_COEFFICIENTS[key]
    return NarmaxParams(
        mu=co["mu"],
        a=np.array(co["a"]),
        b=np.array(co["b"], dtype=float).reshape(st.r, st.d_x),
        c=np.array(co["c"], dtype=float).reshape(st.s, st.d_R),
        d=np.array(co["d"]),
        sigma2=co["sigma2"],
    )
