"""Exception types shared across the package.

The CLI maps ``ConfigError`` (and subclasses) to exit code 2 and
``TrainingAborted`` to exit code 3.
"""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class DimensionError(ValueError):
    """Tensor shapes do not line up."""


class InputError(ValueError):
    """Bad user-supplied data (unknown token, too-short video, ...)."""


class ContractError(RuntimeError):
    """A call violated an API precondition."""


class CheckpointError(ConfigError):
    """Checkpoint file is malformed or does not match the model it is loaded into."""


class TrainingAborted(RuntimeError):
    def __init__(self, step, reason):
        super().__init__(f"training aborted at step {step}: {reason}")
        self.step = step
        self.reason = reason
