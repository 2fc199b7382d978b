"""Exception types shared across the package."""


class GameDimensionError(ValueError):
    """A state, reference or action does not match the game's declared shapes.

    Carries the offending ``field`` name and, when applicable, the ``player``
    index so callers can report exactly what was malformed.
    """

    def __init__(self, message, field=None, player=None):
        super().__init__(message)
        self.field = field
        self.player = player


class TrajectoryDivergedError(RuntimeError):
    """A rollout produced a non-finite state."""

    def __init__(self, message, step_index, tuple_index=None):
        super().__init__(message)
        self.step_index = step_index
        self.tuple_index = tuple_index


class ModelBlowupError(RuntimeError):
    """The metabolic model integrator produced a non-finite internal state."""


class CurvatureError(RuntimeError):
    """The own-action block of a Q-function is not strictly positive definite.

    Raised by policy improvement: it signals an inadmissible Q iterate
    (typically a bad initialization) rather than a numerical accident, so it
    is never silently regularized away.
    """

    def __init__(self, message, player=None):
        super().__init__(message)
        self.player = player


class ExcitationError(RuntimeError):
    """Collected data fails the persistence-of-excitation check.

    The remedy is richer exploration (wider noise, more varied starts), not a
    smaller threshold.
    """

    def __init__(self, message, player, min_eigenvalue):
        super().__init__(message)
        self.player = player
        self.min_eigenvalue = min_eigenvalue


class SingularFeaturesError(RuntimeError):
    """The regression matrix is rank deficient despite the excitation check."""


class LPSolverError(RuntimeError):
    """The policy-evaluation linear program did not return an optimal vertex."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class OracleNonConvergence(RuntimeError):
    """Exact value iteration exceeded its iteration cap.

    The game is outside the guarantee class (or the cap is too small); the
    last sup-norm residual is attached for diagnosis.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class ConfigError(ValueError):
    """An experiment configuration file is missing, malformed or has unknown keys."""
