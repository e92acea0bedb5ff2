"""Exception types shared across the library."""


class AnisoHardyError(Exception):
    """Base class for all library errors."""


class NotExpansive(AnisoHardyError):
    """Matrix has an eigenvalue of modulus <= 1 + tol."""


class SingularMatrix(AnisoHardyError):
    """Matrix is numerically singular."""


class EmptyInput(AnisoHardyError):
    """An operation received an empty point/field collection."""


class GridMismatch(AnisoHardyError):
    """Two sampled fields do not share the same grid."""


class BallOutsideGrid(AnisoHardyError):
    """A dilated ball does not fit inside the field box."""


class EmptyRange(AnisoHardyError):
    """Scale range is empty."""


class ZeroMean(AnisoHardyError):
    """Mollifier has (numerically) zero integral where a nonzero mean is required."""


class EmptyDictionary(AnisoHardyError):
    """Grand maximal dictionary is empty."""


class NotInSN(AnisoHardyError):
    """Mollifier could not be normalized into the Schwartz-seminorm unit ball."""


class UnboundedRegion(AnisoHardyError):
    """Region mask is not bounded (or not a strict subset of the grid support)."""


class CoverageFailure(AnisoHardyError):
    """Greedy cover failed to cover the region; a finer grid is needed."""


class EmptyDenominator(AnisoHardyError):
    """Partition-of-unity denominator vanished on a covered grid point."""


class IllConditioned(AnisoHardyError):
    """Weighted polynomial projection has condition number above threshold."""


class ResidualTooLarge(AnisoHardyError):
    """A reconstruction/partition residual exceeded its tolerance."""


class TransformVanishes(AnisoHardyError):
    """Fourier transform of the profile vanishes on the required annulus."""


class OrderRangeError(AnisoHardyError):
    """Kernel regularity order outside its admissible range."""


class DegenerateProfile(AnisoHardyError):
    """Moment projection removed (almost) all mass of the profile."""


class EmptySamples(AnisoHardyError):
    """Regularity certificate requested with no admissible sample pairs."""


class BadProbe(AnisoHardyError):
    """Probe does not satisfy the required vanishing moments."""


class PreconditionViolated(AnisoHardyError):
    """Input pair violates a documented precondition."""


class UnknownExperiment(AnisoHardyError):
    """Experiment id not present in the registry."""


class UnknownProfile(AnisoHardyError):
    """Test-family profile name not recognized."""
