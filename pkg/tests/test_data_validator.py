"""数据验证器测试"""

import numpy as np
import pytest

from src.dynamics.base import SeriesSet
from src.processors.data_validator import DataValidator, ValidationSeverity


class TestDataValidator:
    """DataValidator 测试"""

    @pytest.fixture
    def validator(self):
        return DataValidator(min_rows=5)

    @pytest.fixture
    def noise_series(self):
        x = np.random.default_rng(0).normal(size=(400, 4))
        return SeriesSet(delta=0.05, x_obs=x)

    def test_validate_lorenz_data(self, validator, small_series):
        """测试 Lorenz 观测通过验证"""
        result = validator.validate(small_series)
        assert result.valid is True
        assert len(result.errors) == 0
        assert result.rows == small_series.N
        assert result.components == small_series.K

    def test_non_finite_values(self, validator, noise_series):
        """测试非有限值"""
        noise_series.x_obs[10, 2] = np.nan
        noise_series.x_obs[11, 2] = np.inf
        result = validator.validate(noise_series)
        assert result.valid is False
        assert len(result.errors) == 1
        assert result.errors[0].rule == "finite_values"
        assert "2" in result.errors[0].message

    def test_shape_consistency(self, validator, noise_series):
        """测试 z 行数与 x 不一致"""
        noise_series.z = np.zeros((noise_series.N, noise_series.K))
        result = validator.validate(noise_series)
        assert result.valid is False
        errors = [e for e in result.errors if e.rule == "shape_consistency"]
        assert len(errors) == 1
        assert errors[0].field == "z"

    def test_minimum_length(self, validator):
        """测试行数少于下限"""
        result = validator.validate(SeriesSet(delta=0.05, x_obs=np.random.default_rng(1).normal(size=(3, 4))))
        assert result.valid is False
        assert [e.rule for e in result.errors] == ["minimum_length"]

    def test_constant_component(self, validator, noise_series):
        """测试常数分量"""
        noise_series.x_obs[:, 1] = 2.5
        result = validator.validate(noise_series)
        assert result.valid is False
        errors = [e for e in result.errors if e.rule == "non_constant"]
        assert len(errors) == 1
        assert errors[0].component == 1

    def test_component_symmetry_warning(self, validator, noise_series):
        """测试分量均值明显偏离时产生警告"""
        noise_series.x_obs[:, 0] += 5.0
        result = validator.validate(noise_series)
        assert result.valid is True  # 仍然有效（仅是警告）
        warnings = [w for w in result.warnings if w.rule == "component_symmetry"]
        assert 0 in {w.component for w in warnings}
        assert all(w.severity == ValidationSeverity.WARNING for w in warnings)

    def test_symmetric_noise_no_warning(self, validator, noise_series):
        """测试同分布分量不触发对称性警告"""
        result = validator.validate(noise_series)
        assert [w for w in result.warnings if w.rule == "component_symmetry"] == []

    def test_symmetry_skipped_for_single_component(self, validator):
        """测试单分量序列跳过对称性检查并给出提示"""
        series = SeriesSet(delta=0.05, x_obs=np.random.default_rng(2).normal(size=(200, 1)))
        result = validator.validate(series)
        assert result.valid is True
        assert result.warnings == []
        assert [(i.rule, i.severity) for i in result.infos] == [("component_symmetry", ValidationSeverity.INFO)]
        assert result.summary()["infos"] == 1

    def test_summary(self, validator, noise_series):
        """测试验证摘要"""
        noise_series.x_obs[:, 3] = 0.0
        summary = validator.validate(noise_series).summary()
        assert summary["valid"] is False
        assert summary["errors"] == 1
        assert summary["rules"] == ["non_constant"]
        assert summary["rows"] == 400
