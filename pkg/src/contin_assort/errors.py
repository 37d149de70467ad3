"""Exception types raised across the package."""


class ContinAssortError(Exception):
    """Base class for all package errors."""


class NonFiniteError(ContinAssortError, ValueError):
    """An integrand produced NaN or inf."""


class CapacityNotBindingError(ContinAssortError, ValueError):
    """Inner bisection requested although the upper level set already fits."""


class EmptyExplorationError(ContinAssortError, ValueError):
    """A test assortment was never offered."""


class HorizonTooShortError(ContinAssortError, ValueError):
    """The horizon cannot accommodate one offer of every test assortment."""


class BadIndexSetError(ContinAssortError, ValueError):
    """Bump index set has the wrong size or contains out-of-range bins."""


class DegenerateFitError(ContinAssortError, ValueError):
    """Rate curve cannot be fitted (all horizons equal or zero regressor)."""


class MismatchedHorizonsError(ContinAssortError, ValueError):
    """Regret summaries do not share a common horizon grid."""


class BadScaleError(ContinAssortError, ValueError):
    """Purchase data falls outside [0, 1] after scaling."""


class ConfigError(ContinAssortError, ValueError):
    """Invalid experiment or CLI configuration."""
