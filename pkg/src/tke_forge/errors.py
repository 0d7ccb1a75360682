"""Exception hierarchy. Every error raised by the package derives from
:class:`TkeForgeError`; parameter and shape problems also derive from
``ValueError`` so generic callers can catch them the usual way."""


class TkeForgeError(Exception):
    pass


class ParameterError(TkeForgeError, ValueError):
    pass


class ShapeError(TkeForgeError, ValueError):
    pass


class SchemaError(TkeForgeError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"missing or misplaced column {column!r}")


class ParseError(TkeForgeError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class CadenceError(TkeForgeError):
    def __init__(self, time_s, message):
        self.time_s = time_s
        super().__init__(f"t={time_s!r}: {message}")


class EmptyPhaseError(TkeForgeError):
    pass


class MergeError(TkeForgeError):
    pass


class EmptyInputError(TkeForgeError, ValueError):
    pass


class DomainError(TkeForgeError, ValueError):
    pass


class DegenerateVarianceError(TkeForgeError, ValueError):
    def __init__(self, message, column=None):
        self.column = column
        super().__init__(message)


class InsufficientDataError(TkeForgeError, ValueError):
    pass


class AlignmentError(TkeForgeError):
    pass


class ConditioningError(TkeForgeError):
    def __init__(self, message, jitter=None):
        self.jitter = jitter
        super().__init__(message)


class DivergenceError(TkeForgeError):
    pass


class MissingCellError(TkeForgeError, KeyError):
    def __init__(self, model, dataset, split):
        self.pair = (model, dataset, split)
        super().__init__(f"no result for model={model!r} dataset={dataset!r} split={split!r}")

    def __str__(self):
        return self.args[0]


class StageError(TkeForgeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
