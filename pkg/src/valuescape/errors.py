"""Exception hierarchy.

Every error raised on purpose by the toolkit derives from ``ValuescapeError``;
most also derive from the closest builtin (``ValueError``, ``KeyError``,
``OSError``) so callers can catch them generically.
"""


class ValuescapeError(Exception):
    pass


# --- survey ingest -------------------------------------------------------


class MissingFieldError(ValuescapeError, ValueError):
    def __init__(self, field, entry):
        self.field = field
        self.entry = entry
        super().__init__(f"codebook entry {entry!r} is missing field {field!r}")


class DuplicateQuestionIdError(ValuescapeError, ValueError):
    pass


class NonOrdinalScaleError(ValuescapeError, ValueError):
    pass


class UnknownQuestionColumnError(ValuescapeError, ValueError):
    pass


class MalformedRowError(ValuescapeError, ValueError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class UnknownQuestionError(ValuescapeError, KeyError):
    pass


# --- stratification ------------------------------------------------------


class DuplicateAxisError(ValuescapeError, ValueError):
    pass


class UnknownAxisError(ValuescapeError, KeyError):
    pass


class UnknownAxisValueError(ValuescapeError, KeyError):
    pass


# --- landscape -----------------------------------------------------------


class EmptyModesError(ValuescapeError, ValueError):
    pass


class InvalidModesError(ValuescapeError, ValueError):
    pass


class EmptyHistogramError(ValuescapeError, ValueError):
    pass


class DegenerateScaleError(ValuescapeError, ValueError):
    pass


class InsufficientSubgroupsError(ValuescapeError, ValueError):
    pass


class UnknownCategoryError(ValuescapeError, ValueError):
    pass


class InsufficientDataError(ValuescapeError, ValueError):
    pass


# --- dataset construction ------------------------------------------------


class MissingDisplayFormError(ValuescapeError, KeyError):
    pass


class ExcludedQuestionError(ValuescapeError, ValueError):
    pass


class OverlappingStrataError(ValuescapeError, ValueError):
    pass


class UnknownStratumError(ValuescapeError, KeyError):
    pass


class ExportError(ValuescapeError, OSError):
    pass


# --- model gateway -------------------------------------------------------


class TransportError(ValuescapeError, ConnectionError):
    def __init__(self, message, attempts=1):
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempt(s))")


class AuthError(ValuescapeError, PermissionError):
    pass


class ConfigError(ValuescapeError, ValueError):
    pass


# --- evaluation ----------------------------------------------------------


class DuplicateResultError(ValuescapeError, ValueError):
    pass


class EmptyGroupError(ValuescapeError, ValueError):
    pass


class EmptyResponseError(ValuescapeError, ValueError):
    pass


class MalformedVerdictError(ValuescapeError, ValueError):
    pass


class BothPassesInvalidError(ValuescapeError, ValueError):
    pass


class CaseSetMismatchError(ValuescapeError, ValueError):
    pass


class SampleSetMismatchError(ValuescapeError, ValueError):
    pass


# --- statistics ----------------------------------------------------------


class EmptyInputError(ValuescapeError, ValueError):
    pass


class NonPositiveValueError(ValuescapeError, ValueError):
    pass


class ZeroMeanError(ValuescapeError, ValueError):
    pass


class SingletonStratumError(ValuescapeError, ValueError):
    pass


class LengthMismatchError(ValuescapeError, ValueError):
    pass


class ConstantInputError(ValuescapeError, ValueError):
    pass


class DegenerateMarginalsError(ValuescapeError, ValueError):
    pass


class KeyMismatchError(ValuescapeError, KeyError):
    pass
