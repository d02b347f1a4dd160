"""Exception hierarchy shared across the library."""


class ClfWalkError(Exception):
    """Base class for all library errors."""


class NonFiniteDynamics(ClfWalkError):
    """A dynamics term evaluated to NaN or inf."""


class SingularInertia(ClfWalkError):
    """Inertia matrix failed positive-definiteness."""


class PhaseOutOfRange(ClfWalkError):
    """Phase variable left its guarded range (fall-detection signal)."""


class SingularDecoupling(ClfWalkError):
    """Decoupling matrix too ill-conditioned to invert."""


class NotHurwitz(ClfWalkError):
    """Matrix has an eigenvalue with nonnegative real part."""


class SolveFailed(ClfWalkError):
    """Linear solve produced a residual above tolerance."""


class BadEpsilon(ClfWalkError):
    """CLF tuning parameter outside (0, 1)."""


class RankDeficientFit(ClfWalkError):
    """Regression design matrix numerically rank deficient."""


class GrazingImpact(ClfWalkError):
    """Guard crossing with near-zero approach velocity."""


class FallDetected(ClfWalkError):
    """Torso pitch or phase guard violated during a step."""


class StepTimeout(ClfWalkError):
    """No impact within the allotted multiple of the nominal period."""


class NoConvergence(ClfWalkError):
    """Iterative search terminated without meeting tolerance."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class IncompatibleScenarios(ClfWalkError):
    """Scenarios passed to `compare` disagree on plant or gait."""


class ConfigError(ClfWalkError):
    """Scenario configuration failed validation; message names the key."""
