"""Exception types raised across the package.

Each exception carries a short ``kind`` string so that the command line
layer can map failures to exit codes without inspecting messages.
"""


class VTError(Exception):
    kind = "error"


class InvalidParameter(VTError, ValueError):
    kind = "invalid-parameter"


class DomainError(VTError, ValueError):
    kind = "domain-error"


class AssumptionViolation(VTError):
    kind = "assumption-violation"


class EnergyBelowGround(VTError, ValueError):
    kind = "energy-below-ground"


class HypothesisViolation(VTError):
    kind = "hypothesis-violation"


class TrajectoryExited(VTError, ValueError):
    kind = "trajectory-exited"


class ResolutionError(VTError):
    kind = "resolution"


class IllConditionedFamily(VTError):
    kind = "ill-conditioned-family"


class InsufficientFamily(VTError):
    kind = "insufficient-family"


class SolverFailure(VTError, RuntimeError):
    kind = "solver-failure"


class FitUnreliable(VTError):
    kind = "fit-unreliable"


class InconsistencyFlag(VTError):
    kind = "inconsistency-flag"


class ConfigError(VTError, ValueError):
    kind = "config"


class TruncationError(VTError):
    kind = "truncation-error"
