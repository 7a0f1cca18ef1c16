"""Elastic wave simulation and level-set inverse imaging of two-phase composites."""

from .inverse import InverseConfig, Problem, cost, fd_gradient_check, gradient, invert, synthesize_data
from .levelset import Circle, LevelSet, reinitialize, signed_distance_circle, signed_distance_circles
from .material import MaterialModel, Phase
from .mesh import Mesh, ScalarField, VectorField, generate_mesh
from .wave import ForceParams, SimConfig, run_adjoint, run_forward

__version__ = "0.1.0"
