"""Exception hierarchy shared by every module.

The CLI maps :class:`ConfigError` to exit code 1 and :class:`DataError` to
exit code 2.
"""


class M2Error(Exception):
    """Base class for all package errors."""


class ConfigError(M2Error):
    """Invalid configuration: bad thresholds, missing columns, unknown options."""


class DataError(M2Error):
    """Malformed or inconsistent input data."""

    def __init__(self, message: str, *, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)


class ModelFormatError(DataError):
    """A model file that cannot be loaded. ``field`` names the offending entry."""

    def __init__(self, message: str, *, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
