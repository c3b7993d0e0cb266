"""Exception hierarchy. Each class carries a short ``code`` used in CLI error records."""


class KSConfError(Exception):
    code = "error"


class InvalidParameterError(KSConfError, ValueError):
    code = "invalid-parameter"


class InsufficientDataError(KSConfError, ValueError):
    code = "insufficient-data"


class DomainError(KSConfError, ValueError):
    code = "domain"


class NotTabulatedError(KSConfError, LookupError):
    code = "not-tabulated"


class DegenerateModelError(KSConfError, ValueError):
    code = "degenerate-model"


class NeedsCalibrationError(KSConfError, LookupError):
    code = "needs-calibration"


class FormatError(KSConfError, ValueError):
    code = "format"
