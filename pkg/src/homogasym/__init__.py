"""Periodic homogenization and self-similar asymptotics of viscous conservation laws."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BlowUp, CFLViolation, CompatibilityViolated, ConfigInvalid, DimensionUnsupported, HomogError,
    HypothesisViolated, NewtonDiverged, NonConvergence, NotCoercive, NotPositive, OutOfDomain,
    ShootingFailed, WeightTooSmall, WrapContamination,
)
from .torus import TorusField  # noqa: F401
from .cell import CellProblem, solve_cell, solve_f0  # noqa: F401
from .effective import EffectiveCoefficients, homogenize  # noqa: F401
from .flux import FluxModel, make_flux, taylor_flux_coeffs, verify_hypotheses  # noqa: F401
from .profiles import SelfSimilarProfile, evolve_homogenized, gaussian_profile, stationary_profile  # noqa: F401
from .direct import SimulationConfig, run_simulation, solve_stationary_periodic  # noqa: F401
from .asymptotics import build_uapp, to_self_similar  # noqa: F401
