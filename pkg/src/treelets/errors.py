"""Exception hierarchy.

Two families matter to callers: ``DataError`` (bad input data or spec files,
CLI exit code 1) and ``UsageError`` (invalid parameters, CLI exit code 2).
"""


class TreeletError(Exception):
    """Base class for every error raised by this package."""


class DataError(TreeletError):
    pass


class UsageError(TreeletError):
    pass


class MissingFile(DataError):
    def __init__(self, path):
        super().__init__(f"file not found: {path}")
        self.path = path


class EmptyMatrix(DataError):
    def __init__(self, msg="matrix has no data rows"):
        super().__init__(msg)


class RaggedRow(DataError):
    def __init__(self, row, expected, got):
        super().__init__(f"row {row}: expected {expected} fields, got {got}")
        self.row = row


class NonNumericCell(DataError):
    def __init__(self, row, col, text):
        super().__init__(f"row {row}, col {col}: cannot parse {text!r} as a finite number")
        self.row = row
        self.col = col


class DuplicateName(DataError):
    pass


class InsufficientSamples(DataError):
    def __init__(self, n, needed=2):
        super().__init__(f"need at least {needed} samples, got {n}")
        self.n = n


class NonPositiveEntry(DataError):
    def __init__(self, row, col, value):
        super().__init__(
            f"row {row}, col {col}: value {value!r} is not positive; log_transform needs raw values > 0"
        )
        self.row = row
        self.col = col


class ScaleError(DataError):
    """Raised when a raw-scale matrix reaches an operation that assumes log scale."""


class NonFiniteInput(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LabelMismatch(DataError):
    pass


class InvalidDissimilarity(DataError):
    pass


class InvalidSpec(DataError):
    def __init__(self, field, msg):
        super().__init__(f"invalid spec field {field!r}: {msg}")
        self.field = field


class DegenerateFold(DataError):
    pass


class NoConvergence(TreeletError):
    def __init__(self, sweeps, residual):
        super().__init__(f"Jacobi eigensolver did not converge after {sweeps} sweeps (residual {residual:.3e})")
        self.sweeps = sweeps
        self.residual = residual


class TooFewActive(UsageError):
    pass


class InvalidLevel(UsageError):
    pass


class InvalidK(UsageError):
    pass


class InvalidFolds(UsageError):
    pass
