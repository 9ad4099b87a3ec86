"""Exception hierarchy shared across the package."""


class HistocurateError(Exception):
    """Base class for all errors raised by this package."""


class ManifestError(HistocurateError):
    """Invalid slide manifest (parse failure, missing field, duplicate id)."""


class ConfigError(HistocurateError):
    """Invalid configuration file (group rules, merge map, weights)."""


class FormatError(HistocurateError):
    """Corrupt or unrecognized binary artifact file."""


class DataError(HistocurateError):
    """Input data violates an operation precondition."""
