"""Exception types shared across the package."""


class SurroflowError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(SurroflowError):
    """Invalid or inconsistent user-supplied configuration."""


class StructuralValidationError(SurroflowError):
    """Dataset or artifact structure does not match its manifest."""


class NumericalError(SurroflowError):
    """A numerical routine failed to meet its accuracy contract."""


class ConsolidationError(SurroflowError):
    """Run artifacts are incomplete or inconsistent at reporting time."""


class PipelineError(SurroflowError):
    """Unrecoverable failure inside a pipeline stage."""
