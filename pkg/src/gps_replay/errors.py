"""Exception types. ``category`` is what the CLI reports on failure."""


class GPSError(Exception):
    category = "internal"
    exit_code = 1


class ContractError(GPSError, ValueError):
    """A precondition on an operation's inputs was violated."""
    category = "contract"
    exit_code = 2


class ConfigError(GPSError, ValueError):
    category = "config"
    exit_code = 3


class IngestionError(GPSError, IOError):
    category = "ingestion"
    exit_code = 4
