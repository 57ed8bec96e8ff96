"""数据验证器 - 拟合前的观测序列质量检查"""

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, List, Optional

import numpy as np
from loguru import logger

if TYPE_CHECKING:
    from ..dynamics.base import SeriesSet

# 分量均值偏离合并均值超过若干个标准误时给出警告
SYMMETRY_SIGMAS = 5.0
SYMMETRY_BATCHES = 20


class ValidationSeverity(Enum):
    """验证问题严重级别"""
    ERROR = "error"        # 数据不可用于拟合
    WARNING = "warning"    # 可能影响估计质量
    INFO = "info"          # 提示信息


@dataclass
class ValidationIssue:
    """验证问题"""
    field: str
    severity: ValidationSeverity
    message: str
    rule: str  # 触发的规则名称
    component: Optional[int] = None


@dataclass
class ValidationResult:
    """验证结果"""
    valid: bool
    issues: List[ValidationIssue] = field(default_factory=list)
    rows: int = 0
    components: int = 0

    @property
    def errors(self) -> List[ValidationIssue]:
        return [i for i in self.issues if i.severity == ValidationSeverity.ERROR]

    @property
    def warnings(self) -> List[ValidationIssue]:
        return [i for i in self.issues if i.severity == ValidationSeverity.WARNING]

    @property
    def infos(self) -> List[ValidationIssue]:
        return [i for i in self.issues if i.severity == ValidationSeverity.INFO]

    def summary(self) -> Dict[str, Any]:
        """生成验证摘要"""
        return {
            "valid": self.valid,
            "rows": self.rows,
            "components": self.components,
            "total_issues": len(self.issues),
            "errors": len(self.errors),
            "warnings": len(self.warnings),
            "infos": len(self.infos),
            "rules": sorted({i.rule for i in self.issues}),
        }


class DataValidator:
    """数据验证器

    检查观测序列是否可以用于拟合：数值有限、形状一致、长度足够、
    各分量非常数，并检查各分量统计量是否大致一致。
    """

    def __init__(self, min_rows: int = 3):
        """
        Args:
            min_rows: 最少行数（通常为模型历史长度 n₀ + 2）
        """
        self.min_rows = min_rows

    def validate(self, series: "SeriesSet") -> ValidationResult:
        """验证观测序列

        Args:
            series: 待验证序列

        Returns:
            ValidationResult: 验证结果
        """
        issues: List[ValidationIssue] = []
        logger.info(f"开始数据验证: {series.N} 行, K={series.K}")

        issues.extend(self._check_finite(series))
        issues.extend(self._check_shapes(series))

        # 规则3: 长度
        if series.N < self.min_rows:
            issues.append(ValidationIssue(
                field="x_obs",
                severity=ValidationSeverity.ERROR,
                message=f"序列只有 {series.N} 行，至少需要 {self.min_rows} 行",
                rule="minimum_length",
            ))

        # 含非有限值时后续统计无意义
        if not any(i.rule == "finite_values" for i in issues):
            issues.extend(self._check_non_constant(series))
            issues.extend(self._check_symmetry(series))

        result = ValidationResult(
            valid=not any(i.severity == ValidationSeverity.ERROR for i in issues),
            issues=issues,
            rows=series.N,
            components=series.K,
        )
        logger.info(
            f"数据验证完成: {'通过' if result.valid else '未通过'}, "
            f"{len(result.errors)} 错误, {len(result.warnings)} 警告"
        )
        for issue in result.warnings:
            logger.warning(f"[{issue.rule}] {issue.message}")
        for issue in result.infos:
            logger.info(f"[{issue.rule}] {issue.message}")
        return result

    def _check_finite(self, series: "SeriesSet") -> List[ValidationIssue]:
        """规则1: 所有数组均为有限值"""
        issues: List[ValidationIssue] = []
        for name in ("x_obs", "z", "xi", "rx"):
            values = getattr(series, name)
            if values is None:
                continue
            bad = int(np.sum(~np.isfinite(values)))
            if bad:
                issues.append(ValidationIssue(
                    field=name,
                    severity=ValidationSeverity.ERROR,
                    message=f"{name} 含 {bad} 个非有限值",
                    rule="finite_values",
                ))
        return issues

    def _check_shapes(self, series: "SeriesSet") -> List[ValidationIssue]:
        """规则2: z 行数为 x 行数减一且分量数相同"""
        issues: List[ValidationIssue] = []
        for name in ("z", "xi", "rx"):
            values = getattr(series, name)
            if values is not None and values.shape != (series.N - 1, series.K):
                issues.append(ValidationIssue(
                    field=name,
                    severity=ValidationSeverity.ERROR,
                    message=f"{name} 形状 {values.shape} 与 x ({series.N}, {series.K}) 不一致",
                    rule="shape_consistency",
                ))
        return issues

    def _check_non_constant(self, series: "SeriesSet") -> List[ValidationIssue]:
        """规则4: 各分量不能为常数"""
        issues: List[ValidationIssue] = []
        if series.N < 2:
            return issues
        std = series.x_obs.std(axis=0)
        for k in np.flatnonzero(std == 0.0):
            issues.append(ValidationIssue(
                field="x_obs",
                severity=ValidationSeverity.ERROR,
                message=f"分量 x{k + 1} 为常数",
                rule="non_constant",
                component=int(k),
            ))
        return issues

    def _check_symmetry(self, series: "SeriesSet") -> List[ValidationIssue]:
        """规则5: 各分量均值与合并均值一致（平移对称性）

        序列自相关，标准误用批均值估计。
        """
        issues: List[ValidationIssue] = []
        n_batches = min(SYMMETRY_BATCHES, series.N // 2)
        if n_batches < 2 or series.K < 2:
            issues.append(ValidationIssue(
                field="x_obs",
                severity=ValidationSeverity.INFO,
                message=f"{series.N} 行 × {series.K} 分量不足以比较分量均值，跳过对称性检查",
                rule="component_symmetry",
            ))
            return issues
        x = series.x_obs
        usable = (series.N // n_batches) * n_batches
        batch_means = x[:usable].reshape(n_batches, -1, series.K).mean(axis=1)
        stderr = batch_means.std(axis=0, ddof=1) / np.sqrt(n_batches)
        deviation = np.abs(x.mean(axis=0) - float(x.mean()))
        for k in np.flatnonzero(deviation > SYMMETRY_SIGMAS * stderr):
            if stderr[k] == 0.0:
                continue
            issues.append(ValidationIssue(
                field="x_obs",
                severity=ValidationSeverity.WARNING,
                message=(
                    f"分量 x{k + 1} 均值偏离合并均值 {deviation[k]:.4g}，"
                    f"超过 {SYMMETRY_SIGMAS:g} 个标准误 ({stderr[k]:.3g})"
                ),
                rule="component_symmetry",
                component=int(k),
            ))
        return issues
