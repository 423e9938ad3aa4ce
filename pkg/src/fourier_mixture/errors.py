"""Exception hierarchy shared across the package."""


class MixtureError(Exception):
    """Base class for all errors raised by fourier_mixture."""


class ParameterError(MixtureError, ValueError):
    """Invalid model or configuration parameters."""


class DomainError(MixtureError, ValueError):
    """Argument outside the domain of an operation."""


class InsufficientDataError(MixtureError, ValueError):
    """Too few samples for the requested operation."""


class ConfigError(MixtureError, ValueError):
    """Experiment configuration failed validation.

    ``path`` names the offending field, dotted (``budgets.n``).
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class LatticeTooLargeError(MixtureError):
    """Lattice enumeration would exceed the configured cap."""

    def __init__(self, estimate, cap):
        self.estimate = estimate
        self.cap = cap
        super().__init__(f"estimated {estimate:.3g} lattice points exceeds cap {cap}")


class FindSpikesError(MixtureError):
    """A spike-finding run produced no surviving candidates."""


class ConsensusError(MixtureError):
    """No run agrees with a majority of the others."""


class PatchAmbiguityError(MixtureError):
    """A base center has zero or several matches in an augmented subspace."""

    def __init__(self, center, coord, matches):
        self.center = center
        self.coord = coord
        self.matches = matches
        super().__init__(
            f"base center {center} has {matches} matches in augmented coordinate {coord}"
        )


class StarvedComponentError(MixtureError):
    """A component lost all responsibility mass during refinement."""

    def __init__(self, component, mass):
        self.component = component
        self.mass = mass
        super().__init__(f"component {component} starved (mass {mass:.3g})")


class RetriesExhaustedError(MixtureError):
    """Frame redraws ran out before a consistent projection was found."""


class PipelineError(MixtureError):
    """Failure inside learn_mixture, tagged with the stage that raised it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
