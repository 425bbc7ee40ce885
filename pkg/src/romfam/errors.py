"""Exception types shared across the package."""

from numpy.linalg import LinAlgError


class SingularMatrixError(LinAlgError):
    """A factorization hit a pivot below the configured threshold."""


class RankDeficiencyError(LinAlgError):
    """A basis or projector lost full column rank."""


class InstabilityError(ValueError):
    """An operation requiring asymptotic stability received an unstable system."""


class SizeCapError(ValueError):
    """A dense-path operation received a system above its supported order."""


class DegenerateShiftError(ValueError):
    """A shift configuration left the reduced model unobservable."""


class TopologyError(ValueError):
    """A cell complex or its parameter set failed validation."""


class FitError(RuntimeError):
    """Parameter estimation aborted (non-finite residual at the start point)."""


class PipelineError(RuntimeError):
    """A hybrid-pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
