"""fwlab: a pseudospectral laboratory for wave breaking in weakly
dispersive Burgers-type equations, with a dynamic-rescaling solver and
quantitative blowup diagnostics."""

__version__ = "0.1.0"

from .initdata import AdmissibilityParams, MidFieldBump, certify, construct_data
from .multipliers import OperatorSplit, apply_dispersion, apply_split, eval_kernel
from .physical import StepController, rhs_physical, run_to_breaking, step
from .profiles import ProfileFamily, eval_jet, eval_profile, eval_rescaled
from .selfsim import (ModulationState, ReferenceJet, integrate_trajectory,
                      rhs_selfsim, solve_modulation, step_selfsim)
from .spectral import Field, GridSpec, SelfSimField

__all__ = [
    "AdmissibilityParams", "Field", "GridSpec", "MidFieldBump", "ModulationState",
    "OperatorSplit", "ProfileFamily", "ReferenceJet", "SelfSimField",
    "StepController", "apply_dispersion", "apply_split", "certify",
    "construct_data", "eval_jet", "eval_kernel", "eval_profile", "eval_rescaled",
    "integrate_trajectory", "rhs_physical", "rhs_selfsim", "run_to_breaking",
    "solve_modulation", "step", "step_selfsim",
]
