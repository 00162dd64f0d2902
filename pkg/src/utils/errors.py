from typing import Optional

import numpy as np


class GPError(Exception):
    """Base error. `code` is machine-parseable, `exit_code` is what the CLI returns."""

    code = "GP_ERROR"
    exit_code = 1

    def one_line(self) -> str:
        msg = " ".join(str(self).split())
        return f"ERROR {self.code}: {msg}"


class UsageError(GPError):
    code = "USAGE"
    exit_code = 2


class DataError(GPError):
    code = "DATA"
    exit_code = 3


class NumericError(GPError):
    code = "NUMERIC"
    exit_code = 4


class DimensionMismatch(DataError):
    code = "DIMENSION_MISMATCH"


class LevelOutOfRange(DataError):
    code = "LEVEL_OUT_OF_RANGE"


class MalformedCsv(DataError):
    code = "MALFORMED_CSV"

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        where = []
        if row is not None:
            where.append(f"row={row}")
        if column is not None:
            where.append(f"column={column}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")
        self.row = row
        self.column = column


class DenseCapExceeded(DataError):
    code = "DENSE_CAP_EXCEEDED"


class ArtifactVersionError(DataError):
    code = "ARTIFACT_VERSION"


class ArtifactInvariantError(DataError):
    code = "ARTIFACT_INVARIANT"


class NotPositiveDefinite(NumericError, np.linalg.LinAlgError):
    code = "NOT_POSITIVE_DEFINITE"


class NonFinite(NumericError):
    code = "NON_FINITE"

    def __init__(self, message: str, group: Optional[str] = None):
        super().__init__(f"{message} [group={group}]" if group else message)
        self.group = group


class AllRestartsFailed(NumericError):
    code = "ALL_RESTARTS_FAILED"


class StepRejected(NumericError):
    code = "STEP_REJECTED"


class RoundTripMismatch(NumericError):
    code = "ROUNDTRIP_MISMATCH"

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(f"{message} (first divergent field: {field})" if field else message)
        self.field = field
