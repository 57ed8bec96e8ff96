"""数据处理层 - 数据验证和错误处理"""

from .data_validator import DataValidator, ValidationIssue, ValidationResult, ValidationSeverity
from .error_handler import (
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
    error_handler,
    with_error_handling,
)
