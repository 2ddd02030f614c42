"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: configuration and usage
problems exit with 2, numeric failures at runtime exit with 3.
"""


class PnpLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PnpLabError):
    """Invalid static configuration: bad shapes, specs, plans, schedules."""


class UsageError(PnpLabError):
    """A call that is structurally wrong: empty batches, kind mismatches."""


class DomainError(PnpLabError):
    """Inputs outside an operation's mathematical domain (e.g. t = 1)."""


class TrainingDiverged(PnpLabError):
    """Loss became non-finite during training."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"training diverged at step {step}: loss={loss}")


class CheckpointError(PnpLabError):
    """A checkpoint file could not be read back consistently."""


class CentroidUndefined(PnpLabError):
    """A frame carries no positive mass, so its centroid is undefined."""
