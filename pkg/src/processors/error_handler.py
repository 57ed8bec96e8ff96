"""错误处理 - 异常层次、标准化和退出码映射"""

import functools
import time
from typing import Any, Callable, Dict, Optional, TypeVar

import numpy as np
from loguru import logger
from pydantic import ValidationError

T = TypeVar("T")


class ReductionError(Exception):
    """降阶建模基础异常"""

    exit_code: int = 4

    def __init__(
        self,
        message: str,
        error_code: str = "UNKNOWN_ERROR",
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details or {}


class ConfigurationError(ReductionError):
    """配置错误"""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "CONFIG_ERROR", details)


class ContractViolationError(ReductionError):
    """调用约定（前置条件）被破坏"""

    exit_code = 1

    def __init__(
        self,
        message: str,
        details: Optional[Dict[str, Any]] = None,
        error_code: str = "CONTRACT_VIOLATION",
    ):
        super().__init__(message, error_code, details)


class InsufficientDataError(ContractViolationError):
    """数据长度不足"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details, error_code="INSUFFICIENT_DATA")


class ArtifactIOError(ReductionError):
    """产物读写错误"""

    exit_code = 2

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "IO_ERROR", details)


class ProvenanceError(ReductionError):
    """产物来源校验失败（哈希不一致）"""

    exit_code = 3

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "PROVENANCE_MISMATCH", details)


class NumericalError(ReductionError):
    """数值计算失败"""

    exit_code = 4

    def __init__(
        self,
        message: str,
        details: Optional[Dict[str, Any]] = None,
        error_code: str = "NUMERICAL_ERROR",
    ):
        super().__init__(message, error_code, details)


class BlowUpError(NumericalError):
    """轨道发散（出现非有限值或超过阈值）"""

    def __init__(self, message: str, step: int, details: Optional[Dict[str, Any]] = None):
        merged = {"step": step, **(details or {})}
        super().__init__(message, merged, error_code="BLOW_UP")
        self.step = step


class RankDeficiencyError(NumericalError):
    """回归矩阵秩亏"""

    def __init__(self, message: str, columns: list, details: Optional[Dict[str, Any]] = None):
        merged = {"columns": list(columns), **(details or {})}
        super().__init__(message, merged, error_code="RANK_DEFICIENT")
        self.columns = list(columns)


class DegenerateDataError(NumericalError):
    """退化数据（如零方差序列）"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details, error_code="DEGENERATE_DATA")


def check_finite(values: np.ndarray, step: int, threshold: float = 1e6, what: str = "state") -> None:
    """检查状态是否有限且未超过发散阈值

    Args:
        values: 待检查的数组
        step: 当前步数（写入异常详情）
        threshold: 绝对值阈值
        what: 被检查对象名称

    Raises:
        BlowUpError: 出现非有限值或超过阈值
    """
    if not np.all(np.isfinite(values)) or np.max(np.abs(values), initial=0.0) > threshold:
        raise BlowUpError(f"{what}在第{step}步发散", step=step, details={"threshold": threshold})


class ErrorHandler:
    """错误处理管理器"""

    def __init__(self):
        self.error_counts: Dict[str, int] = {}
        self.last_error_time: Dict[str, float] = {}

    def handle_error(self, error: Exception, context: str = "unknown") -> ReductionError:
        """统一错误处理

        Args:
            error: 原始异常
            context: 错误上下文

        Returns:
            ReductionError: 标准化错误
        """
        self._record_error(error, context)

        if isinstance(error, ReductionError):
            return error
        if isinstance(error, ValidationError):
            return ConfigurationError(
                f"配置校验失败: {error}",
                {"context": context, "errors": error.errors(include_url=False)},
            )
        if isinstance(error, OSError):
            return ArtifactIOError(
                f"文件读写失败: {error}",
                {"context": context, "original_error": str(error)},
            )
        if isinstance(error, (FloatingPointError, np.linalg.LinAlgError)):
            return NumericalError(
                f"数值计算失败: {error}",
                {"context": context, "original_error": str(error)},
            )
        return ReductionError(
            f"未知错误: {error}",
            "UNKNOWN_ERROR",
            {"context": context, "original_error": str(error), "error_type": type(error).__name__},
        )

    def _record_error(self, error: Exception, context: str) -> None:
        """记录错误统计"""
        key = f"{context}:{type(error).__name__}"
        self.error_counts[key] = self.error_counts.get(key, 0) + 1
        self.last_error_time[key] = time.time()

    def get_error_stats(self) -> Dict[str, Any]:
        """获取错误统计信息"""
        return {
            "error_counts": self.error_counts.copy(),
            "last_errors": self.last_error_time.copy(),
        }


# 全局错误处理器实例
error_handler = ErrorHandler()


def with_error_handling(context: str = "unknown"):
    """错误处理装饰器：把任意异常标准化为 ReductionError 后重新抛出

    Args:
        context: 错误上下文
    """

    def decorator(func: Callable[..., T]) -> Callable[..., T]:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> T:
            try:
                return func(*args, **kwargs)
            except Exception as e:
                standardized = error_handler.handle_error(e, context)
                if standardized is not e:
                    logger.debug(f"{context}: {type(e).__name__} -> {standardized.error_code}")
                    raise standardized from e
                raise

        return wrapper

    return decorator
