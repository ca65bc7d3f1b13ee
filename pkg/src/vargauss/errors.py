"""Exception types shared across the package."""


class VargaussError(Exception):
    """Base class for all package-specific errors."""


class PreconditionError(VargaussError, ValueError):
    """An input violates a documented precondition."""


class SingularGramError(VargaussError):
    """A Gram/metric matrix is singular or indefinite.

    Carries the offending eigenvalue in ``eigenvalue``.
    """

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class InvalidGramError(SingularGramError):
    """Gram matrix of a fluctuation problem is indefinite."""


class SingularExpectationError(VargaussError):
    """A closed-form Gaussian expectation hit a numerically singular matrix."""


class UnsupportedPhaseError(VargaussError):
    """A phase pattern produced a matrix outside the supported Pfaffian domain."""


class IntegratorFailureError(VargaussError):
    """A flow integrator could not proceed (persistent step rejection)."""


class PurityDriftError(VargaussError):
    """State purity drifted beyond tolerance along a trajectory."""


class EnergyConservationError(VargaussError):
    """Real-time energy drift exceeded its bound even after refinement."""


class RiccatiBlowupError(VargaussError):
    """The pair-creation matrix of the phase tracker diverged."""


class DimensionExceededError(VargaussError):
    """A brute-force Hilbert space exceeds the hard dimension guard."""


class UnderResolvedError(VargaussError):
    """A time series is too short for the requested spectral broadening."""


class ConfigError(VargaussError):
    """A run configuration failed validation.

    ``field`` is the dotted path of the offending entry, ``line`` its line
    number in the config file when known.
    """

    def __init__(self, message, field=None, line=None):
        loc = ""
        if field is not None:
            loc = f" (field: {field}"
            loc += f", line {line})" if line is not None else ")"
        super().__init__(message + loc)
        self.field = field
        self.line = line
