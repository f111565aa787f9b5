"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Two fields that must share a shape do not."""


class DomainError(ValueError):
    """Input values outside the mathematical domain of an operation."""


class VolumeFormatError(ValueError):
    """Malformed volume header or payload on disk."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given input (e.g. empty ground truth)."""


class DegenerateTestError(ValueError):
    """A statistical test cannot be run (e.g. all paired differences are zero)."""


class PhantomConfigError(ValueError):
    """Phantom configuration violates its invariants."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss or parameters.

    Carries the epoch and the smoothness weight so sweep reports can name
    the unstable configuration.
    """

    def __init__(self, epoch: int, smoothness_weight: float, detail: str = ""):
        self.epoch = epoch
        self.smoothness_weight = smoothness_weight
        msg = (f"training diverged at epoch {epoch} "
               f"with smoothness weight {smoothness_weight:g}")
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
