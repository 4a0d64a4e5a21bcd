"""MPM elastic bodies coupled to rigid bodies through convex lagged contact."""

__version__ = "0.1.0"

from .bodies import GeomAttachment, RigidBody, Trajectory
from .collision import BiasCache, ContactSet, detect_contacts
from .contact_model import ContactParams
from .coupling import SimState, StepConfig, advance_step
from .geometry import Box, Capsule, HalfSpace, Sphere
from .grid import AllocationError, SparseGrid
from .materials import Material
from .particles import ParticleSet, seed_box, seed_sphere
from .scene import SceneConfig, build_state, dump_scene, load_scene
from .simulate import run_simulation
from .solver import SolverParams, dense_newton_oracle, quasi_newton_solve
from .transfer import SortPlan, build_sort_plan, plan_staleness, scatter_reduce

__all__ = [
    "__version__",
    "AllocationError", "BiasCache", "Box", "Capsule", "ContactParams",
    "ContactSet", "GeomAttachment", "HalfSpace", "Material", "ParticleSet",
    "RigidBody", "SceneConfig", "SimState", "SolverParams", "SortPlan",
    "SparseGrid", "Sphere", "StepConfig", "Trajectory", "advance_step",
    "build_sort_plan", "build_state", "dense_newton_oracle", "detect_contacts",
    "dump_scene", "load_scene", "plan_staleness", "quasi_newton_solve",
    "run_simulation", "scatter_reduce", "seed_box", "seed_sphere",
]
