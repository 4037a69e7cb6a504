"""Boundary feedback stabilization of the generalized Burgers-Huxley equation with memory."""
from .controller import BoundaryFeedbackController, ControllerSpec, synthesize
from .fitting import DecayFit, DecayRateEstimator, fit_decay_rate
from .lifting import DirichletMap
from .memory_pde import IMEXIntegrator, SimState, solve_steady_state
from .params import DomainSpec, PhysicalParams, build_grid, validate_params

__all__ = [
    "BoundaryFeedbackController",
    "ControllerSpec",
    "DecayFit",
    "DecayRateEstimator",
    "DirichletMap",
    "DomainSpec",
    "IMEXIntegrator",
    "PhysicalParams",
    "SimState",
    "build_grid",
    "fit_decay_rate",
    "solve_steady_state",
    "synthesize",
    "validate_params",
]
