"""Exception hierarchy shared by every module; each class maps to a CLI exit code."""


class SSABIError(Exception):
    exit_code = 1


class ConfigError(SSABIError, ValueError):
    exit_code = 2


class DataError(SSABIError, ValueError):
    exit_code = 3


class NumericalError(SSABIError, ArithmeticError):
    exit_code = 4


class DiagnosticError(NumericalError):
    """Raised when a sampler diagnostic falls outside its accepted band."""


class CheckpointVersionError(SSABIError):
    exit_code = 3
