"""Exception hierarchy shared by all solver modules."""


class RigidMPMError(Exception):
    """Base class for every error raised by the package."""


class InvalidConfigError(RigidMPMError, ValueError):
    """Bad scenario or constructor input."""


class OutOfDomainError(RigidMPMError):
    """A position or GIMP domain lies outside the background grid."""


class ElementInversionError(RigidMPMError):
    """A deformation increment produced det(F) <= 0."""


class IllConditioningError(RigidMPMError):
    """A matrix factorisation failed; carries a list of suspect elements."""

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = list(elements)


class SingularFrameError(RigidMPMError):
    """The truss driver points of a rigid body coincide."""


class InvalidMeshError(RigidMPMError):
    """Degenerate or inconsistently oriented rigid-body triangles."""


class MaterialError(RigidMPMError):
    """Constitutive update failed (e.g. non-SPD left Cauchy-Green tensor)."""


class NonConvergenceError(RigidMPMError):
    """Newton iterations did not reach the residual tolerance."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class SimulationAbort(RigidMPMError):
    """Step halving exhausted; a state dump was written to ``dump_path``."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path
