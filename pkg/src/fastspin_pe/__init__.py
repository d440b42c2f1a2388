"""fastspin-pe: pseudo-spectral laboratory for the rotating stochastic
primitive equations on the unit 3-torus.

Simulates the original fast-rotation system, its rescaled and auxiliary
forms, the resonant limit system and a nudged copy of the limit system,
with matched noise across pairs, plus the ensemble statistics (coupling
distances, mixing-rate fits, moment diagnostics) used to probe the
averaging and mixing behaviour numerically.
"""

__version__ = "0.1.0"

from .grid import Grid
from .fields import (
    ScalarField,
    SpectralField,
    barotropic_project,
    baroclinic_project,
    read_spef,
    sobolev_norm,
    write_spef,
)
from .dynamics import (
    Auxiliary,
    LimitResonant,
    NudgedLimit,
    Original,
    Rescaled,
    State,
    rescale_state,
    rhs,
)
from .noise import NoiseSpec, RngStream
from .stepping import StepScheme, Stepper, Trajectory, simulate_path
from .ensemble import FeatureMap, run_ensemble, wasserstein1
from .config import ExperimentConfig, load_config, parse_config
from .experiments import run_experiment

__all__ = [
    "Auxiliary",
    "ExperimentConfig",
    "FeatureMap",
    "Grid",
    "LimitResonant",
    "NoiseSpec",
    "NudgedLimit",
    "Original",
    "Rescaled",
    "RngStream",
    "ScalarField",
    "SpectralField",
    "State",
    "StepScheme",
    "Stepper",
    "Trajectory",
    "barotropic_project",
    "baroclinic_project",
    "load_config",
    "parse_config",
    "read_spef",
    "rescale_state",
    "rhs",
    "run_ensemble",
    "run_experiment",
    "simulate_path",
    "sobolev_norm",
    "wasserstein1",
    "write_spef",
    "__version__",
]
