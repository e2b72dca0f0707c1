"""Implicit Euler steppers for the full model and its fast-process limits."""
from .attractor import AttractorError, AttractorResult, surface_attractor
from .phi import mp_kappa, phi_fixed_point
from .problem import (ConfigurationError, FullProblem, IncompatibleInitialData, ModelVariant, PositivityError,
                      StepFailure, StepperConfig, SystemState)
from .stepping import (STEPPERS, advance, prepare_state, simulate, step_fast_accumulation, step_fast_chemistry,
                       step_fast_sorption, step_fast_surface_diffusion, step_full, step_three_param_mp,
                       step_two_param)

__all__ = [
    "AttractorError", "AttractorResult", "ConfigurationError", "FullProblem", "IncompatibleInitialData",
    "ModelVariant", "PositivityError", "STEPPERS", "StepFailure", "StepperConfig", "SystemState", "advance",
    "mp_kappa", "phi_fixed_point", "prepare_state", "simulate", "step_fast_accumulation", "step_fast_chemistry",
    "step_fast_sorption", "step_fast_surface_diffusion", "step_full", "step_three_param_mp", "step_two_param",
    "surface_attractor",
]
