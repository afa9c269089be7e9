"""Exception types shared across the codec.

The CLI maps these onto exit codes: DataError -> 3, NumericError -> 4.
"""


class CodecError(Exception):
    """Base class for all drnvc errors."""


class ShapeError(CodecError):
    """Tensor or weight dimensions do not match an operation's contract."""


class DataError(CodecError):
    """Bad input data: files, configs, bitstreams, empty datasets."""


class BitstreamError(DataError):
    """Corrupt, truncated or mismatched bitstream."""


class NumericError(CodecError):
    """Non-finite value or other numeric failure that aborts a run."""
