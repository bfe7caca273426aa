"""Implicit 3D GIMP material point method with penalty frictional contact against rigid bodies."""
from .errors import (ElementInversionError, IllConditioningError, InvalidConfigError, InvalidMeshError,
                     MaterialError, NonConvergenceError, OutOfDomainError, RigidMPMError, SimulationAbort,
                     SingularFrameError)
from .grid import BackgroundGrid, build_graded_axis, uniform_axis
from .materials import DruckerPrager, HenckyElastic
from .points import MaterialPoints, fill_box
from .rigid import RigidBody, TrussFrame
from .solver import NewmarkParams, Simulation, SolverSettings, newmark_kinematics

__version__ = "0.1.0"
