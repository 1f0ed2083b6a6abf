"""Exception types shared across the package."""


class FlowromError(Exception):
    """Base class for all package errors."""


class ConfigError(FlowromError, ValueError):
    """Invalid configuration value or malformed config file."""


class ShapeError(FlowromError, ValueError):
    """Array shape inconsistent with what an operation requires."""


class DivergenceError(FlowromError, RuntimeError):
    """Training produced a non-finite loss or gradient.

    `epoch` is the 0-based epoch index when known, else None; `member` the
    ensemble member index when training an ensemble.
    """

    def __init__(self, message, epoch=None, member=None):
        self.epoch = epoch
        self.member = member
        parts = [message]
        if member is not None:
            parts.append(f"member {member}")
        if epoch is not None:
            parts.append(f"epoch {epoch}")
        super().__init__(" - ".join(parts))


class FormatError(FlowromError, ValueError):
    """Malformed or incompatible on-disk artifact (dataset, checkpoint)."""
