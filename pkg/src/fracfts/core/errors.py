"""证书计算、积分器与不动点模块共用的异常类型。"""

from typing import Optional


class FracFtsError(Exception):
    """所有领域异常的基类"""


class SpecValidationError(FracFtsError, ValueError):
    """系统描述、稳定性查询或配置文件不合法"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class InconsistentSpecError(SpecValidationError):
    """系统数据彼此矛盾（例如时滞超出历史区间、κ 为负）"""


class MlfOverflowError(FracFtsError, OverflowError):
    """E_σ(t) 超出浮点范围"""


class MlfAccuracyError(FracFtsError, ArithmeticError):
    """无法在给定自变量处保证所要求的相对精度"""


class QuadratureError(FracFtsError, ArithmeticError):
    """弱奇异积分无法解析到要求精度"""


class NonFiniteValueError(FracFtsError, ArithmeticError):
    """算子求值过程中出现 inf / nan"""


class CertificateConsistencyError(FracFtsError, AssertionError):
    """理论上必然成立的不等式在数值上被违反"""


class OutputError(FracFtsError, OSError):
    """结果文件无法写入"""
