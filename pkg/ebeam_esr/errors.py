"""Exception types raised by the simulator and analysis code.

Configuration problems and numerical problems live on separate branches so the
command line can map them onto distinct exit codes.
"""

from typing import Optional


class EbeamEsrError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(EbeamEsrError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class ValidationError(ConfigError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalError(EbeamEsrError):
    pass


class SingularPoint(NumericalError, ValueError):
    """Evaluation point lies on a current-carrying line."""


class BadDiscretization(NumericalError, ValueError):
    pass


class BeamIntersectsSample(NumericalError, ValueError):
    pass


class StepTooLarge(NumericalError, ValueError):
    pass


class QuasiStaticViolation(NumericalError, ValueError):
    pass


class DegenerateData(NumericalError, ValueError):
    pass


class NoConvergence(NumericalError, ArithmeticError):
    pass


class EmptyInput(NumericalError, ValueError):
    pass


class AllZero(NumericalError, ValueError):
    pass


class BothZero(NumericalError, ValueError):
    pass


class SaturationRegime(UserWarning):
    """Drive is too strong for the linearized steady state."""
