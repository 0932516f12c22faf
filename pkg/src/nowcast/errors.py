"""Exception hierarchy shared across the package."""


class NowcastError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(NowcastError, ValueError):
    pass


class DimensionError(NowcastError, ValueError):
    pass


# data ingestion


class InputFormatError(NowcastError, ValueError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DuplicateDateError(InputFormatError):
    pass


class NonPositiveBaseError(NowcastError, ValueError):
    def __init__(self, message, month=None):
        super().__init__(message)
        self.month = month


class TargetGapError(NowcastError, ValueError):
    pass


class DegenerateColumnError(NowcastError, ValueError):
    def __init__(self, column):
        super().__init__(f"column {column!r} has zero variance in the training window")
        self.column = column


# estimation


class DegenerateRegressorError(NowcastError, ValueError):
    pass


class NumericInputError(NowcastError, ValueError):
    pass


class EmptyModelError(NowcastError, ValueError):
    pass


class NumericalStabilityError(NowcastError, ArithmeticError):
    def __init__(self, message, t=None):
        if t is not None:
            message = f"{message} (t={t})"
        super().__init__(message)
        self.t = t


class TargetMissingError(NowcastError, ValueError):
    pass


class OptimizationFailedError(NowcastError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


# evaluation


class AlignmentError(NowcastError, ValueError):
    pass


class DegenerateBaselineError(NowcastError, ValueError):
    pass


class DegenerateDifferentialError(NowcastError, ValueError):
    pass


class CollinearityError(NowcastError, ValueError):
    pass


class StageError(NowcastError, RuntimeError):
    """A pipeline stage failed or its inputs are absent."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause


class FoldFitError(NowcastError, RuntimeError):
    """A model fit failed inside one cross-validation fold."""

    def __init__(self, fold, cause):
        super().__init__(f"fold {fold}: {type(cause).__name__}: {cause}")
        self.fold = fold
        self.cause = cause
