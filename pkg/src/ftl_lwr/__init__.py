"""Follow-the-Leader traffic particles and their LWR limit."""

from .atomize import (
    InitialDensity,
    ParticleConfig,
    Violation,
    atomize,
    atomize_dfr,
    atomize_midpoint_shift,
    half_box,
    load_initial_density,
    two_level,
    unit_box,
    validate_config,
)
from .density import (
    AtomicMeasure,
    cumulative,
    dirac_empirical,
    eulerian_density,
    inverse_eulerian_density,
    lagrangian_profiles,
    pseudo_inverse,
    support_bound,
)
from .dynamics import (
    IntegratorSettings,
    Trajectory,
    ftl_rhs_density,
    ftl_rhs_inverse_density,
    ftl_rhs_positions,
    integrate,
)
from .errors import ConfigError, FtlLwrError, NumericalError
from .harness import StudyConfig, StudyReport, run_study
from .lwr import GridDensity, godunov_flux, riemann_exact, sample_to_grid, solve_lwr
from .metrics import (
    MetricValue,
    lipschitz_sup_bound,
    lp_distance,
    oleinik_residual,
    total_variation,
    w1_distance,
)
from .piecewise import PiecewiseConstantFn, PiecewiseLinearFn
from .velocity import VelocityModel, check_assumptions, eval_flux, eval_velocity, parse_velocity

__all__ = [
    "AtomicMeasure",
    "atomize",
    "atomize_dfr",
    "atomize_midpoint_shift",
    "check_assumptions",
    "ConfigError",
    "cumulative",
    "dirac_empirical",
    "eulerian_density",
    "eval_flux",
    "eval_velocity",
    "ftl_rhs_density",
    "ftl_rhs_inverse_density",
    "ftl_rhs_positions",
    "FtlLwrError",
    "godunov_flux",
    "GridDensity",
    "half_box",
    "InitialDensity",
    "integrate",
    "IntegratorSettings",
    "inverse_eulerian_density",
    "lagrangian_profiles",
    "lipschitz_sup_bound",
    "load_initial_density",
    "lp_distance",
    "MetricValue",
    "NumericalError",
    "oleinik_residual",
    "parse_velocity",
    "ParticleConfig",
    "PiecewiseConstantFn",
    "PiecewiseLinearFn",
    "pseudo_inverse",
    "riemann_exact",
    "run_study",
    "sample_to_grid",
    "solve_lwr",
    "StudyConfig",
    "StudyReport",
    "support_bound",
    "total_variation",
    "Trajectory",
    "two_level",
    "unit_box",
    "validate_config",
    "VelocityModel",
    "Violation",
    "w1_distance",
]
