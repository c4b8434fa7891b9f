"""Exception hierarchy shared across the pipeline.

DataError maps to CLI exit code 2 (bad input data / IO), ConfigError to
exit code 3 (bad configuration). Everything else is a plain PipelineError.
"""


class PipelineError(Exception):
    pass


class DataError(PipelineError):
    """Unusable input data: malformed files, bad dimensions, missing fixations."""


class ConfigError(PipelineError):
    """Invalid run configuration: unknown model/metric/protocol ids, bad parameters."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(DataError):
    """Manifest cross-reference failures; collects every problem found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ShapeError(DataError):
    pass


class DegenerateMapError(DataError):
    """A map with no usable variation (constant saliency, zero-hit fixation map)."""


class NoFixationError(DataError):
    pass


class LayoutError(DataError):
    """Feature layout mismatch between vectors, banks, or trained models."""


class ConvergenceError(PipelineError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ProtocolError(ConfigError):
    """Cross-validation protocol incompatible with the design matrix mode."""
