"""Exception hierarchy shared by all modules."""


class MadNgmError(Exception):
    pass


class ConfigError(MadNgmError, ValueError):
    """Invalid configuration or inconsistent dimensions."""


class DivergedError(MadNgmError):
    """Optimizer produced a non-finite loss."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class NumericalBlowupError(MadNgmError):
    """Time evolution produced non-finite or exploding values.

    ``step`` is the failing step index, ``trajectory`` the partial trajectory
    recorded so far (may be ``None``) and ``point`` the offending quadrature
    point index when known.
    """

    def __init__(self, message: str, step: int | None = None, point: int | None = None, trajectory=None):
        self.step = step
        self.point = point
        self.trajectory = trajectory
        super().__init__(message)


class DegenerateSystemError(MadNgmError):
    """Least-squares matrix has no singular value above the absolute floor."""


class InstabilityError(MadNgmError):
    """Reference solver diverged or was configured with an unstable step."""


class CheckpointError(MadNgmError):
    pass


class CorruptHeaderError(CheckpointError):
    pass


class TruncatedPayloadError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class MissingArtifactError(MadNgmError, FileNotFoundError):
    """An upstream pipeline artifact does not exist."""
