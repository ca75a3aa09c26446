class ChainCrfError(Exception):
    """Base class for errors raised by this package."""


class FormatError(ChainCrfError):
    """Malformed input data or model file. Message names the file/line when known."""


class ConfigError(ChainCrfError):
    """Invalid configuration: unknown key, bad value, or missing resource."""
