"""Exception hierarchy shared by all kinkscan modules."""


class KinkScanError(ValueError):
    """Base class for every error raised by kinkscan."""


class InvalidOrderError(KinkScanError):
    pass


class UnsupportedDerivativeError(KinkScanError):
    pass


class BoundaryError(KinkScanError):
    """Evaluation point too close to the edge of [0, 1] for the bandwidth."""


class NumericError(KinkScanError):
    pass


class InvalidParameterError(KinkScanError):
    pass


class RegimeError(KinkScanError):
    """Requested quantity is undefined in the given dependence regime."""


class UnsupportedScenarioError(KinkScanError):
    pass


class DomainError(KinkScanError):
    pass


class DegenerateKinkError(KinkScanError):
    pass


class MissingLatentError(KinkScanError):
    pass


class InsufficientDataError(KinkScanError):
    pass


class NoExtremaError(KinkScanError):
    pass


class StudyInvalidError(KinkScanError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(KinkScanError):
    def __init__(self, message, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key


class DataFormatError(KinkScanError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row
