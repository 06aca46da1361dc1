"""Exception types shared across the package.

The CLI maps these onto process exit codes (see cli.py), so subcommands
raise them instead of calling sys.exit directly.
"""


class FutureFrameError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(FutureFrameError, ValueError):
    """A configuration is internally inconsistent or incompatible with an input."""


class ShapeAuditError(ConfigurationError):
    """Parameter tensors do not match the shapes implied by the model config."""


class IngestionError(FutureFrameError, ValueError):
    """A raw frame or corpus record violates the ingestion contract."""


class SplitError(FutureFrameError, ValueError):
    """An actor split cannot be constructed from the given inputs."""


class StreamError(FutureFrameError, ValueError):
    """A tuple stream cannot be built (e.g. no segments on the requested side)."""


class DivergenceError(FutureFrameError, RuntimeError):
    """Training produced a non-finite loss or gradient.

    Carries the optimizer step at which the divergence was detected.
    """

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss/gradient at step {step}")


class EvaluationError(FutureFrameError, ValueError):
    """An evaluation run cannot be carried out (e.g. empty test side)."""


class EmptyMaskError(EvaluationError):
    """The groundtruth frame produced no edges, so the sample is excluded.

    This is a signal, not a score: callers either skip the sample (counting
    it as excluded) or propagate the error.
    """


class SpecParseError(FutureFrameError, ValueError):
    """A synthetic scene spec file is malformed (usage error at the CLI)."""
