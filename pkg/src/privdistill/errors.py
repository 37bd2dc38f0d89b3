"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`PrivDistillError`; the CLI prints the class name as the
machine-parseable error tag.
"""


class PrivDistillError(Exception):
    pass


class ShapeError(PrivDistillError, ValueError):
    pass


class ParameterError(PrivDistillError, ValueError):
    pass


class StateError(PrivDistillError, RuntimeError):
    pass


class NumericalError(PrivDistillError, FloatingPointError):
    pass


class CalibrationError(PrivDistillError, ValueError):
    pass


class UndefinedMetricError(PrivDistillError, ValueError):
    pass


class ParseError(PrivDistillError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(PrivDistillError, ValueError):
    pass


class ChecksumError(PrivDistillError, ValueError):
    pass


class ConfigError(PrivDistillError, ValueError):
    pass


class DependencyError(PrivDistillError, FileNotFoundError):
    pass


class ExistsError(PrivDistillError, FileExistsError):
    pass
