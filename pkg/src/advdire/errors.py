"""Exception types shared across the toolkit."""


class ContractError(ValueError):
    """An argument violates a documented pre- or postcondition."""


class ConfigError(ValueError):
    """A configuration value or key is invalid."""


class DatasetError(RuntimeError):
    """A dataset source is empty or unusable."""


class IngestionError(DatasetError):
    """A raw image could not be decoded or is too small."""


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, corrupt, or of the wrong kind."""


class ProtocolError(RuntimeError):
    """An evaluation protocol constraint was violated."""
