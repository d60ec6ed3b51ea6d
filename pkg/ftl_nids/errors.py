"""
Error types for the FTL simulator

Every failure the pipeline can report has its own class so callers (and the
CLI exit-code contract) can tell them apart. `exit_code` is 2 for
config/validation problems and 1 for runtime failures.
"""


class FTLError(Exception):
    """Base class for all simulator errors"""

    exit_code = 1


# Config / validation (exit code 2)

class ConfigError(FTLError):
    exit_code = 2


class DataValidationError(FTLError):
    exit_code = 2


class MissingFileError(DataValidationError):
    def __init__(self, path):
        super().__init__(f"File not found: {path}")
        self.path = str(path)


class RaggedRowError(DataValidationError):
    def __init__(self, row: int, found: int, expected: int):
        super().__init__(f"Row {row} has {found} cells, header has {expected}")
        self.row = row


class MissingLabelColumnError(DataValidationError):
    def __init__(self, column: str):
        super().__init__(f"Label column '{column}' not found in header")
        self.column = column


class EmptyLabelError(DataValidationError):
    def __init__(self, row: int):
        super().__init__(f"Empty label cell in row {row}")
        self.row = row


# Data pipeline

class PartitionError(FTLError):
    pass


class EmptyPartitionError(PartitionError):
    pass


class EmptyDataError(FTLError):
    pass


class AllColumnsDroppedError(FTLError):
    pass


class CardinalityError(FTLError):
    pass


class ZeroVarianceError(FTLError):
    pass


class NoFeaturesSelectedError(FTLError):
    pass


class DimensionMismatchError(FTLError):
    pass


# Model / weights

class ShapeMismatchError(FTLError):
    pass


class StaleCacheError(FTLError):
    pass


class WeightFormatError(FTLError):
    pass


class VersionError(WeightFormatError):
    pass


class FingerprintMismatchError(WeightFormatError):
    pass


class TruncatedFileError(WeightFormatError):
    pass


class SingleClassError(FTLError):
    pass


class RoundAbortedError(FTLError):
    """A client failed mid-round; the server state was left untouched"""

    def __init__(self, round_index: int, client_id, cause: Exception):
        super().__init__(f"Round {round_index} aborted by client {client_id}: {cause}")
        self.round_index = round_index
        self.client_id = client_id


# Metrics

class LengthMismatchError(FTLError):
    pass


class EmptyInputError(FTLError):
    pass


class LabelRangeError(FTLError):
    pass
