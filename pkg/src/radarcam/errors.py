"""Exception hierarchy shared across the package.

ConfigError maps to CLI exit code 2, DataError to exit code 3.
"""


class RadarCamError(Exception):
    pass


class ConfigError(RadarCamError):
    pass


class SceneFormatError(ConfigError):
    """Malformed scene file; carries the offending field path and, when the
    document itself failed to parse, the line number."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = []
        if path:
            where.append(f"field {path!r}")
        if line is not None:
            where.append(f"line {line}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class DataError(RadarCamError):
    pass
