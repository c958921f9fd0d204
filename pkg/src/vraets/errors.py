"""Exception hierarchy shared by the library and the CLI exit codes."""


class PipelineError(Exception):
    """Base class for all library errors."""


class DataError(PipelineError):
    """Malformed input data, missing artifacts, or shape mismatches."""


class NumericalError(PipelineError):
    """Non-finite values encountered where finite ones are required."""
