"""Exception types shared across the package."""


class PairampError(Exception):
    """Base class for all package errors."""


class ConfigError(PairampError):
    """Invalid configuration or parameter values."""


class AsymmetryUnsupported(ConfigError):
    """Modulated-coupling scheme requires equal damping rates."""


class BasisMismatch(ConfigError):
    """Covariance and drift matrices carry different basis tags."""


class StepTooLarge(ConfigError):
    """Requested SDE step violates the stability bound dt * rho(A) <= 0.1."""


class NumericalError(PairampError):
    """Base class for runtime numerical failures (CLI exit code 2)."""


class FrequencyTooLow(NumericalError):
    """Mechanical frequency too small for the rotating-wave comparison."""


class Diverged(NumericalError):
    """Integration blew past the variance cap (above-threshold dynamics)."""


class NotConverged(NumericalError):
    """Steady-state detection did not trigger before t_max."""


class NoConvergence(NumericalError):
    """Newton iteration failed to locate a physical root."""


class NotHurwitz(NumericalError):
    """Drift matrix has an eigenvalue with non-negative real part."""


class NonFinite(NumericalError):
    """Result left the convergent parameter domain."""
