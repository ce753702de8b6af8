"""Error taxonomy shared by the pipeline and the CLI exit-code mapping."""


class ConfigError(ValueError):
    """Invalid configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Unusable or inconsistent input data (CLI exit code 3)."""


class NumericError(RuntimeError):
    """Numeric failure inside a pipeline stage (CLI exit code 4)."""
