"""错误处理测试"""

import numpy as np
import pytest
from pydantic import BaseModel, ValidationError

from src.processors.error_handler import (
    ArtifactIOError,
    BlowUpError,
    ConfigurationError,
    ContractViolationError,
    DegenerateDataError,
    ErrorHandler,
    InsufficientDataError,
    NumericalError,
    ProvenanceError,
    RankDeficiencyError,
    ReductionError,
    check_finite,
    with_error_handling,
)


class _Model(BaseModel):
    n: int


class TestExitCodes:
    """退出码映射测试"""

    @pytest.mark.parametrize(
        "error,code",
        [
            (ConfigurationError("x"), 1),
            (ContractViolationError("x"), 1),
            (InsufficientDataError("x"), 1),
            (ArtifactIOError("x"), 2),
            (ProvenanceError("x"), 3),
            (NumericalError("x"), 4),
            (BlowUpError("x", step=1), 4),
            (RankDeficiencyError("x", columns=["b1_1"]), 4),
            (DegenerateDataError("x"), 4),
        ],
    )
    def test_exit_code(self, error, code):
        """测试各异常的退出码"""
        assert isinstance(error, ReductionError)
        assert error.exit_code == code

    def test_error_codes(self):
        """测试错误码和详情"""
        err = BlowUpError("发散", step=12, details={"threshold": 1e6})
        assert err.error_code == "BLOW_UP"
        assert err.details == {"step": 12, "threshold": 1e6}
        assert InsufficientDataError("x").error_code == "INSUFFICIENT_DATA"
        assert RankDeficiencyError("x", columns=["a", "b"]).columns == ["a", "b"]


class TestCheckFinite:
    """发散检查测试"""

    def test_passes(self):
        """测试有限且未超阈值"""
        check_finite(np.ones(3), step=1)

    def test_non_finite(self):
        """测试非有限值"""
        with pytest.raises(BlowUpError) as exc_info:
            check_finite(np.array([1.0, np.nan]), step=4)
        assert exc_info.value.step == 4

    def test_threshold(self):
        """测试超过阈值"""
        with pytest.raises(BlowUpError):
            check_finite(np.array([2.0]), step=0, threshold=1.0)


class TestErrorHandler:
    """ErrorHandler 测试"""

    @pytest.fixture
    def handler(self):
        return ErrorHandler()

    def test_reduction_error_passthrough(self, handler):
        """测试已标准化的异常原样返回"""
        err = ProvenanceError("x")
        assert handler.handle_error(err, "ctx") is err

    def test_standardization(self, handler):
        """测试常见异常映射"""
        try:
            _Model(n="abc")
        except ValidationError as e:
            assert isinstance(handler.handle_error(e, "cfg"), ConfigurationError)
        assert isinstance(handler.handle_error(FileNotFoundError("f"), "io"), ArtifactIOError)
        assert isinstance(handler.handle_error(np.linalg.LinAlgError("singular"), "fit"), NumericalError)
        unknown = handler.handle_error(KeyError("k"), "x")
        assert unknown.error_code == "UNKNOWN_ERROR"
        assert unknown.details["error_type"] == "KeyError"

    def test_error_stats(self, handler):
        """测试错误统计"""
        handler.handle_error(OSError("a"), "io")
        handler.handle_error(OSError("b"), "io")
        stats = handler.get_error_stats()
        assert stats["error_counts"]["io:OSError"] == 2
        assert "io:OSError" in stats["last_errors"]


class TestDecorator:
    """with_error_handling 测试"""

    def test_converts_exception(self):
        """测试把原始异常转换为标准化异常"""

        @with_error_handling("load")
        def load():
            raise PermissionError("denied")

        with pytest.raises(ArtifactIOError) as exc_info:
            load()
        assert isinstance(exc_info.value.__cause__, PermissionError)

    def test_reraises_reduction_error(self):
        """测试标准化异常原样抛出"""

        @with_error_handling("fit")
        def fit():
            raise RankDeficiencyError("秩亏", columns=["mu"])

        with pytest.raises(RankDeficiencyError):
            fit()

    def test_return_value(self):
        """测试正常返回"""

        @with_error_handling()
        def ok():
            return 42

        assert ok() == 42
