"""Exception types raised across the package."""


class PhasecascadeError(Exception):
    """Base class for all package-specific errors."""


class GridMismatchError(PhasecascadeError):
    """Fields living on different grids were combined."""


class ShapeMismatchError(PhasecascadeError):
    """Sample array does not match the grid layout."""


class NonZeroMeanError(PhasecascadeError):
    """Right inverse of the divergence applied to a field with nonzero mean."""


class NonZeroThetaMeanError(PhasecascadeError):
    """Operation requires a profile with vanishing fast-variable mean."""


class DegenerateGradientError(PhasecascadeError):
    """Phase gradient dropped below the nondegeneracy constant."""


class DegenerateDirectionError(PhasecascadeError):
    """Directional nondegeneracy along e1 fails for the singular inverse."""


class NondegeneracyLostError(PhasecascadeError):
    """Phase gradient lost nondegeneracy during transport.

    Carries the truncation time ``t_star`` at which the run was cut.
    """

    def __init__(self, t_star, message=""):
        self.t_star = float(t_star)
        super().__init__(message or f"nondegeneracy lost at t={t_star:.6g}")


class PolarizationViolatedError(PhasecascadeError):
    """Initial oscillating datum is not polarized."""

    def __init__(self, order, defect=None):
        self.order = int(order)
        self.defect = defect
        msg = f"oscillating datum at order {order} violates polarization"
        if defect is not None:
            msg += f" (relative defect {defect:.3e})"
        super().__init__(msg)


class CFLError(PhasecascadeError):
    """Time step too large for the current velocity field."""


class EpsilonTooSmallError(PhasecascadeError):
    """Requested epsilon cannot be represented on this grid."""


class UnresolvableEpsilonError(PhasecascadeError):
    """1/epsilon is not an integer wavenumber representable on the grid."""


class MissingDependencyError(PhasecascadeError):
    """A lower-order object required by a hierarchy step is absent."""


class ConvergenceError(PhasecascadeError):
    """An iterative solver failed to reach its tolerance."""


class ConfigError(PhasecascadeError):
    """Run configuration failed to parse or validate."""
