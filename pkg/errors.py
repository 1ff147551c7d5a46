# errors.py
"""
异常层次
ValidationError -> 退出码 2，NumericalError -> 退出码 3
"""


class FracLabError(Exception):
    """所有 fraclab 异常的基类"""
    exit_code = 1


class ValidationError(FracLabError, ValueError):
    """输入或配置不合法"""
    exit_code = 2


class NumericalError(FracLabError, ArithmeticError):
    """数值计算失败"""
    exit_code = 3


# 校验类错误

class SOutOfRange(ValidationError):
    pass


class EpsOutOfRange(ValidationError):
    pass


class BadWindow(ValidationError):
    pass


class BadRadii(ValidationError):
    pass


class NotOnBoundary(ValidationError):
    pass


class CenterBelowTheta(ValidationError):
    pass


class UnsupportedShape(ValidationError):
    pass


class ShapeParseError(ValidationError):
    pass


class ZeroOffset(ValidationError):
    pass


class UnknownConfigKey(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


# 数值类错误

class TailUnavailable(NumericalError):
    pass


class TableTooLarge(NumericalError, MemoryError):
    pass


class NoProgress(NumericalError):
    pass


class CertificateMismatch(NumericalError):
    pass


def exit_code_for(error: BaseException) -> int:
    """把异常映射为命令行退出码"""
    if isinstance(error, FracLabError):
        return error.exit_code
    if isinstance(error, (ValueError, KeyError, TypeError)):
        return 2
    if isinstance(error, (ArithmeticError, MemoryError)):
        return 3
    return 1
