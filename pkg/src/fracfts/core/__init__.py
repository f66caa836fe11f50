# models.system 依赖 core.errors，这里只导出不依赖 models 的模块
from .errors import (
    CertificateConsistencyError,
    FracFtsError,
    InconsistentSpecError,
    MlfAccuracyError,
    MlfOverflowError,
    NonFiniteValueError,
    OutputError,
    QuadratureError,
    SpecValidationError,
)
from .registry import registry
from .specfun import MlfParams, gamma, log_mittag_leffler, mittag_leffler

__all__ = [
    "FracFtsError",
    "SpecValidationError",
    "InconsistentSpecError",
    "MlfOverflowError",
    "MlfAccuracyError",
    "QuadratureError",
    "NonFiniteValueError",
    "CertificateConsistencyError",
    "OutputError",
    "registry",
    "MlfParams",
    "gamma",
    "log_mittag_leffler",
    "mittag_leffler",
]
