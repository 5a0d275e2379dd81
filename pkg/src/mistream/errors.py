"""Exception types shared across the package."""


class MistreamError(Exception):
    """Base class for all package errors."""


class DomainError(MistreamError, ValueError):
    """An argument falls outside the domain an operation is defined on."""


class LabelingError(MistreamError, ValueError):
    """A supervised operation received an example without a class label."""


class TrainingError(MistreamError, RuntimeError):
    """Optimization produced a non-finite gradient or parameter."""


class ParseError(MistreamError, ValueError):
    """A data or configuration file could not be parsed."""


class SchemaError(MistreamError, ValueError):
    """A data file parsed but its contents are inconsistent."""


class ConfigError(MistreamError, ValueError):
    """An experiment configuration failed validation."""
