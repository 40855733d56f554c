"""Exception types raised across psdlab."""


class PSDError(Exception):
    """Base class for all psdlab errors."""


class ZeroInertiaError(PSDError, ValueError):
    """All particles coincide, so the configuration has no shape."""


class UndefinedDirectionError(PSDError, ValueError):
    """A direction was requested from a vanishing momentum."""


class SingularPotentialError(PSDError, ArithmeticError):
    """Two particles coincide (or the curve reached a collision shape)."""


class BranchDomainError(PSDError, ArithmeticError):
    """The square-root argument of the kappa equation went negative."""


class DegenerateRateError(PSDError, ArithmeticError):
    """kappa vanished, so the 1/sqrt(kappa) field rates blow up."""


class ShapeMismatchError(PSDError, ValueError):
    """Fields or operators live on different discretizations."""


class NotProjectableError(PSDError, ValueError):
    """A configuration-space wave function is not constant along similarity orbits."""


class MultiValuedPhaseError(PSDError, ValueError):
    """The phase field winds around the sphere and cannot be unwrapped."""


class InsufficientDataError(PSDError, ValueError):
    """A diagnostic needs more samples than the trajectory provides."""


class ConfigError(PSDError, ValueError):
    """An experiment configuration failed validation.

    ``problems`` holds one message per offending item.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnknownPresetError(PSDError, KeyError):
    def __init__(self, name, available):
        self.name = name
        self.available = sorted(available)
        super().__init__(f"unknown preset {name!r}; available: {', '.join(self.available)}")

    def __str__(self):
        return self.args[0]
