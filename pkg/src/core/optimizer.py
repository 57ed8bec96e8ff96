"""数值优化 - BFGS 拟牛顿极大化和 QR 最小二乘"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from loguru import logger

from ..processors.error_handler import ContractViolationError, RankDeficiencyError

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]

# Armijo 回溯参数
BACKTRACK_SHRINK = 0.5
SUFFICIENT_INCREASE = 1e-4
MAX_BACKTRACKS = 60
FLAT_TOLERANCE = 1e-14


@dataclass
class OptProblem:
    """无约束极大化问题

    Attributes:
        dim: 参数个数
        objective: x -> (值, 梯度)
        tolerance: 梯度范数停止阈值
        max_iters: 最大迭代次数
    """

    dim: int
    objective: Objective
    tolerance: float = 1e-6
    max_iters: int = 500

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ContractViolationError(f"参数维数必须 ≥ 1: {self.dim}")
        if not self.tolerance > 0:
            raise ContractViolationError(f"容差必须为正: {self.tolerance}")


@dataclass
class OptResult:
    """优化结果"""

    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    message: str = ""


def bfgs_maximize(prob: OptProblem, x0: np.ndarray) -> OptResult:
    """BFGS 拟牛顿法极大化

    上升方向由逆 Hessian 近似给出，步长用 Armijo 回溯（收缩 0.5，充分上升 1e-4）。
    曲率条件失败时逆 Hessian 重置为单位阵。线搜索失败返回当前最优点且 converged=False。

    Args:
        prob: 优化问题
        x0: 初始点

    Returns:
        OptResult: 最优点、目标值、梯度范数、迭代次数和收敛标志
    """
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape[0] != prob.dim:
        raise ContractViolationError("初始点维数与问题不符", {"dim": prob.dim, "x0": x.shape[0]})

    # 内部按极小化 -f 处理
    value, grad = prob.objective(x)
    f, g = -value, -np.asarray(grad, dtype=float)
    H = np.eye(prob.dim)
    first_update = True
    gnorm = float(np.linalg.norm(g))
    iterations = 0
    message = "达到梯度容差"

    while gnorm > prob.tolerance:
        if iterations >= prob.max_iters:
            message = "达到最大迭代次数"
            break
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0:
            # 非下降方向，重置
            H = np.eye(prob.dim)
            p = -g
            slope = float(g @ p)

        alpha = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_new = x + alpha * p
            v_new, g_new = prob.objective(x_new)
            f_new = -v_new
            if np.isfinite(f_new) and f_new <= f + SUFFICIENT_INCREASE * alpha * slope:
                accepted = True
                break
            # 目标值变化已低于浮点分辨率时，以梯度范数下降作为接受条件
            if (
                np.isfinite(f_new)
                and abs(f_new - f) <= FLAT_TOLERANCE * (1.0 + abs(f))
                and float(np.linalg.norm(g_new)) < gnorm
            ):
                accepted = True
                break
            alpha *= BACKTRACK_SHRINK
        if not accepted:
            message = "线搜索失败"
            logger.debug(f"BFGS 线搜索失败, 迭代 {iterations}, |g|={gnorm:.3e}")
            return OptResult(x=x, value=-f, grad_norm=gnorm, iterations=iterations, converged=False, message=message)

        g_new = -np.asarray(g_new, dtype=float)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        iterations += 1

        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            if first_update:
                H = np.eye(prob.dim) * (sy / float(y @ y))
                first_update = False
            rho = 1.0 / sy
            Hy = H @ y
            H = (
                H
                - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            )
        else:
            H = np.eye(prob.dim)
            first_update = True

    converged = gnorm <= prob.tolerance
    return OptResult(x=x, value=-f, grad_norm=gnorm, iterations=iterations, converged=converged, message=message)


def least_squares(
    A: np.ndarray,
    y: np.ndarray,
    column_names: Optional[Sequence[str]] = None,
    rcond: float = 1e-10,
) -> np.ndarray:
    """列主元 QR 分解求解 min |Aθ - y|²

    Args:
        A: (N, m) 设计矩阵
        y: (N,) 观测
        column_names: 列名（秩亏时写入错误信息）
        rcond: 相对秩判定阈值 |R_ii| < rcond·|R_00|

    Returns:
        np.ndarray: (m,) 系数

    Raises:
        ContractViolationError: N < m
        RankDeficiencyError: 设计矩阵秩亏，列出相关列
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    N, m = A.shape
    if N < m:
        raise ContractViolationError(f"观测数 {N} 少于未知数 {m}")
    names: List[str] = list(column_names) if column_names is not None else [f"col{i}" for i in range(m)]

    Q, R, perm = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = diag[0] if diag.size and diag[0] > 0 else 1.0
    rank = int(np.sum(diag > rcond * scale))
    if rank < m:
        dependent = [names[i] for i in perm[rank:]]
        raise RankDeficiencyError(
            f"设计矩阵秩亏 (rank={rank} < {m})，线性相关的列: {dependent}",
            columns=dependent,
        )
    coef_perm = scipy.linalg.solve_triangular(R, Q.T @ y)
    theta = np.empty(m)
    theta[perm] = coef_perm
    return theta
