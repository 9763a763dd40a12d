"""Distances and functionals between discrete densities.

Every integral is evaluated exactly over merged breakpoint sets. Total
variation is always taken against an extension outside the support (zero for
densities), so boundary jumps count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .atomize import InitialDensity, ParticleConfig
from .density import cumulative, eulerian_density, pseudo_inverse
from .errors import ConfigError, ConsistencyError
from .piecewise import (
    PiecewiseConstantFn,
    PiecewiseLinearFn,
    l1_distance_linear,
    l1_norm_linear,
    merged_breakpoints,
)
from .velocity import VelocityModel

W1_AGREEMENT_TOL = 1e-10


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    t: float
    n: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ConsistencyError(f"metric {self.name} is not finite at t={self.t}, n={self.n}")


def write_metric_series(path_or_file, values) -> None:
    """Dump :class:`MetricValue` records as CSV ``t,metric,value,n``."""
    if not hasattr(path_or_file, "write"):
        with open(path_or_file, "w", newline="") as fh:
            write_metric_series(fh, values)
        return
    writer = csv.writer(path_or_file)
    writer.writerow(("t", "metric", "value", "n"))
    for m in values:
        writer.writerow((repr(float(m.t)), m.name, repr(float(m.value)), m.n))


def _as_measure(a):
    if isinstance(a, InitialDensity):
        return a.profile
    if isinstance(a, ParticleConfig):
        return eulerian_density(a)
    return a


def w1_distance(a, b) -> float:
    """1-Wasserstein distance between two unit-mass densities or atomic measures.

    Evaluated both as the L1 distance of the cumulatives and as the L1
    distance on [0, 1] of the pseudo-inverses; a disagreement beyond 1e-10
    raises :class:`ConsistencyError`. Returns the cumulative-based value.
    """
    Fa, Fb = cumulative(_as_measure(a)), cumulative(_as_measure(b))
    by_cdf = l1_distance_linear(Fa, Fb)
    by_quantile = l1_distance_linear(pseudo_inverse(Fa), pseudo_inverse(Fb), interval=(0.0, 1.0))
    if abs(by_cdf - by_quantile) > W1_AGREEMENT_TOL:
        raise ConsistencyError(
            f"W1 evaluations disagree: cumulative {by_cdf!r} vs pseudo-inverse {by_quantile!r}"
        )
    return by_cdf


def _common_cells(a: PiecewiseConstantFn, b: PiecewiseConstantFn):
    if a.domain != b.domain:
        raise ConfigError(f"cannot compare a {a.domain}-domain function with a {b.domain}-domain one")
    grid = merged_breakpoints(a.breakpoints, b.breakpoints)
    mid = 0.5 * (grid[:-1] + grid[1:])
    return np.diff(grid), np.abs(a(mid) - b(mid))


def lp_distance(a, b, p=1) -> float:
    """Exact L^p distance, p in {1, 2, inf}, between piecewise-constant functions."""
    a, b = _as_measure(a), _as_measure(b)
    widths, diff = _common_cells(a, b)
    if p == 1:
        return float(np.dot(widths, diff))
    if p == 2:
        return float(math.sqrt(np.dot(widths, diff**2)))
    if p in (math.inf, "inf"):
        return float(np.max(diff))
    raise ConfigError(f"p must be 1, 2 or inf, got {p!r}")


def total_variation(f: PiecewiseConstantFn, outside: float = 0.0) -> float:
    """Total variation of ``f`` extended by the constant ``outside`` beyond its breakpoints."""
    padded = np.concatenate([[outside], f.values, [outside]])
    return float(np.sum(np.abs(np.diff(padded))))


def velocity_total_variation(config: ParticleConfig, model: VelocityModel) -> float:
    """TV of v(rho^{E,N}); the empty road on both sides has speed v_max."""
    rho = eulerian_density(config)
    return total_variation(rho.map_values(model.v), outside=model.v_max)


def oleinik_residual(config: ParticleConfig, model: VelocityModel, t: float) -> float:
    """max_j (v(rho_{j+1}) - v(rho_j)) / (x_{j+1} - x_j) over j = 0..N-2.

    For velocity laws with non-increasing rho v'(rho) this stays below 1/t.
    """
    if not t > 0:
        raise ConfigError(f"the one-sided bound needs t > 0, got {t}")
    if config.n < 2:
        raise ConfigError("the residual needs at least two cells (N >= 2)")
    speeds = model.v(config.densities)
    return float(np.max(np.diff(speeds) / config.gaps[:-1]))


@dataclass(frozen=True)
class SupBound:
    sup_norm: float
    l1_norm: float
    bound_ok: bool


def lipschitz_sup_bound(f: PiecewiseLinearFn, L_f: float = 1.0, slope_tol: float = 1e-12) -> SupBound:
    """Check ``||f||_inf <= sqrt(L_f ||f||_1)`` for a compactly supported L_f-Lipschitz f.

    With L_f = 1 the bound is attained by a tent of height h on a base of 2h.
    """
    if f.left != 0 or f.right != 0:
        raise ConfigError("f must vanish outside its breakpoints")
    if not f.is_continuous(atol=slope_tol):
        raise ConfigError("a Lipschitz function must be continuous")
    if np.any(np.abs(f.slopes) > L_f * (1.0 + slope_tol)):
        raise ConfigError(f"slopes exceed the Lipschitz constant {L_f}")
    sup = float(np.max(np.abs(np.concatenate([f.start, f.end]))))
    l1 = l1_norm_linear(f)
    return SupBound(sup, l1, sup <= math.sqrt(L_f * l1) + 1e-12)


# -- right-hand sides of the stability estimates ----------------------------


def gap_difference(a: ParticleConfig, b: ParticleConfig) -> float:
    """sum_j |(x_{j+1} - x_j) - (x~_{j+1} - x~_j)| for configurations of equal N."""
    if a.n != b.n:
        raise ConfigError(f"configurations have different N ({a.n} vs {b.n})")
    return float(np.sum(np.abs(a.gaps - b.gaps)))


def w1_gap_bound(a: ParticleConfig, b: ParticleConfig) -> float:
    """2 sum_j |gap differences|; bounds W1 of the Eulerian densities when x_N agrees."""
    return 2.0 * gap_difference(a, b)


def stability_rhs(a0: ParticleConfig, b0: ParticleConfig, lipschitz: float, horizon: float) -> float:
    """W1(rho(0), rho~(0)) + 2 L T sum_j |gap differences at 0|."""
    w0 = w1_distance(eulerian_density(a0), eulerian_density(b0))
    return w0 + 2.0 * lipschitz * horizon * gap_difference(a0, b0)


def interpolation_bound(support_length: float, tv_a: float, tv_b: float, w1: float) -> float:
    """meas(K) (TV(rho) + TV(rho~)) sqrt(W1): bounds ||rho - rho~||_1^2 at one time."""
    return support_length * (tv_a + tv_b) * math.sqrt(max(w1, 0.0))


def uniform_velocity_bv_bound(model: VelocityModel, support_length: float, delta: float) -> float:
    """3 v_max + 2 meas(K) / delta, the bound on TV(v(rho^{E,N}(t))) for t >= delta."""
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    return 3.0 * model.v_max + 2.0 * support_length / delta
