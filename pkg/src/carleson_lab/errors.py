"""Exception hierarchy shared by every module of the laboratory."""


class LabError(Exception):
    """Base class for all errors raised by carleson_lab."""


class ParameterError(LabError, ValueError):
    """A scalar parameter violates a stated constraint."""


class ConfigError(LabError, ValueError):
    """A configuration file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class QuadratureError(LabError, ArithmeticError):
    """Adaptive quadrature failed to converge within the depth cap."""


class BudgetError(LabError, RuntimeError):
    """An enumeration would exceed its configured size budget."""


class SearchExhausted(LabError, RuntimeError):
    """No candidate direction could be certified."""


class GeometryError(LabError, ValueError):
    """A lattice or set construction is degenerate (for example an empty time lattice)."""


class DensityViolation(LabError, RuntimeError):
    """A density requirement failed; ``witness`` carries the offending point."""

    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)


class CoverError(LabError, ValueError):
    """A cover does not contain the set it is supposed to cover."""

    def __init__(self, message: str, witness=None):
        self.witness = witness
        super().__init__(message)
