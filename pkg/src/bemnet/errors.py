"""Exception hierarchy. Each error carries the CLI exit code it maps to."""

from .constants import EXIT_NUMERICAL, EXIT_USAGE


class BemnetError(Exception):
    """Base class for all bemnet failures."""
    exit_code = EXIT_USAGE


# Usage, configuration and data errors (exit 2)

class ConfigError(BemnetError):
    pass


class NonConformingStep(BemnetError):
    """Mesh step does not tile every face of the box."""


class OutsideDomain(BemnetError):
    pass


class ShapeMismatch(BemnetError):
    pass


class EmptyBatch(BemnetError):
    pass


class TooFewSensors(BemnetError):
    pass


class SchemaMismatch(BemnetError):
    pass


class ChecksumMismatch(BemnetError):
    pass


class VersionUnsupported(BemnetError):
    pass


class DatasetMismatch(BemnetError):
    """Dataset manifest disagrees with the requested configuration."""


class InsufficientData(BemnetError):
    pass


# Numerical failures (exit 1)

class CoincidentPoints(BemnetError):
    exit_code = EXIT_NUMERICAL


class SingularSystem(BemnetError):
    exit_code = EXIT_NUMERICAL


class NonFiniteLoss(BemnetError):
    exit_code = EXIT_NUMERICAL


class AllRunsFailed(BemnetError):
    exit_code = EXIT_NUMERICAL
