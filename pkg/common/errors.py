# common/errors.py

class ScdgnError(ValueError):
    """Base error for the pipeline. `exit_code` is what the CLI returns."""

    exit_code = 1
    error_type = "execution_error"


class ConfigError(ScdgnError):
    exit_code = 2
    error_type = "config_error"


class DataError(ScdgnError):
    exit_code = 3
    error_type = "data_error"


class NumericError(ScdgnError):
    exit_code = 4
    error_type = "numeric_error"


EXIT_CODES = {
    "ok": 0,
    "execution_error": 1,
    "config_error": 2,
    "data_error": 3,
    "numeric_error": 4,
}
