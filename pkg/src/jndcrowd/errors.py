class DomainError(ValueError):
    """An argument violated a documented precondition."""


class LadderBuildError(RuntimeError):
    """Encoding or decoding failed while building a distortion ladder."""

    def __init__(self, level, message):
        super().__init__(f"ladder build failed at level {level}: {message}")
        self.level = level


class AdapterUnavailableError(RuntimeError):
    """The configured codec adapter cannot run (e.g. missing executable)."""


class SynthesisError(RuntimeError):
    """Gold-standard synthesis could not produce a valid item."""


class SelectionError(RuntimeError):
    """Region selection found fewer candidates than required."""


class StateError(RuntimeError):
    """A worker lifecycle transition was attempted from an illegal state."""


class ResponseValidationError(ValueError):
    """A submitted response is malformed."""


class ConfigError(ValueError):
    """The study configuration file is invalid."""


class PipelineError(RuntimeError):
    """A QC/analytics pipeline stage failed."""
