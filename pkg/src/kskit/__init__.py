"""Structure-preserving pseudo-spectral solvers for Keller-Segel chemotaxis."""

from .diagnostics import DiagRow, fit_order, l2_error, linf_error, record
from .energy import dissipation, free_energy
from .grid import Grid, read_snapshot, write_snapshot
from .integrators import (
    BdfTableau,
    SchemeState,
    StepFailure,
    bdf_tableau,
    bootstrap,
    initial_state,
    parse_scheme,
    simulate,
    step,
)
from .models import FieldSpec, InitialCondition, ModelKind, ModelParams, build_initial
from .projection import project_bounds_mass, project_positive_mass
from .spectral import SpectralOps, spectral_ops

__version__ = "0.1.0"
