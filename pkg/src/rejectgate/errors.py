"""Exception types raised by rejectgate."""


class RejectGateError(ValueError):
    """Base class for all errors raised by this package."""


class EmptyDatasetError(RejectGateError):
    def __init__(self, message: str = "empty dataset"):
        super().__init__(message)


class InvalidCostModelError(RejectGateError):
    pass


class DataFormatError(RejectGateError):
    """Malformed input file; the message names the row or location."""


class GroupingRequiredError(RejectGateError):
    def __init__(self, message: str = "grouping required"):
        super().__init__(message)


class LogitsRequiredError(RejectGateError):
    def __init__(self, message: str = "logits required"):
        super().__init__(message)


class DegenerateLabelsError(RejectGateError):
    def __init__(self, message: str = "degenerate labels"):
        super().__init__(message)


class UnsupportedVersionError(RejectGateError):
    def __init__(self, message: str = "unsupported spec version"):
        super().__init__(message)
