"""Discrete densities reconstructed from a particle snapshot.

Eulerian densities live on the road (position x), Lagrangian ones on the mass
coordinate z in [0, 1]; cell j always carries the half-open interval
[x_j, x_{j+1}) or [j l, (j+1) l).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .atomize import MASS_TOL, ParticleConfig
from .errors import ConfigError, NormalizationError
from .piecewise import MASS, ROAD, PiecewiseConstantFn, PiecewiseLinearFn


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Equal-mass point masses; ``terminal`` records x_N, which carries no atom."""

    positions: np.ndarray
    masses: np.ndarray
    terminal: float | None = None

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        m = np.array(self.masses, dtype=float)
        if x.ndim != 1 or x.size == 0 or m.shape != x.shape:
            raise ConfigError("atoms need matching, non-empty position and mass arrays")
        if np.any(np.diff(x) <= 0):
            raise ConfigError("atom positions must be strictly ascending")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "masses", m)

    def total_mass(self) -> float:
        return float(np.sum(self.masses))


@dataclass(frozen=True, eq=False)
class StepCumulative(PiecewiseLinearFn):
    """Right-continuous step cumulative of an :class:`AtomicMeasure`."""

    atoms_terminal: float | None = None


def eulerian_density(config: ParticleConfig) -> PiecewiseConstantFn:
    """rho^{E,N}: value l / (x_{j+1} - x_j) on [x_j, x_{j+1})."""
    return PiecewiseConstantFn(config.positions, config.densities, ROAD)


def inverse_eulerian_density(config: ParticleConfig) -> PiecewiseConstantFn:
    """y^{E,N}: value (x_{j+1} - x_j) / l on [x_j, x_{j+1})."""
    return PiecewiseConstantFn(config.positions, config.inverse_densities, ROAD)


def dirac_empirical(config: ParticleConfig) -> AtomicMeasure:
    """Atoms of mass 1/N at x_0, ..., x_{N-1}; the leader x_N carries none."""
    n = config.n
    return AtomicMeasure(config.positions[:-1], np.full(n, 1.0 / n), terminal=float(config.positions[-1]))


def mass_grid(n: int) -> np.ndarray:
    return np.arange(n + 1) / n


def lagrangian_profiles(config: ParticleConfig) -> tuple[PiecewiseConstantFn, PiecewiseConstantFn]:
    """(rho^{L,N}, y^{L,N}) on the mass coordinate, cell j = [j l, (j+1) l)."""
    z = mass_grid(config.n)
    return (
        PiecewiseConstantFn(z, config.densities, MASS),
        PiecewiseConstantFn(z, config.inverse_densities, MASS),
    )


def _check_unit_mass(mass: float) -> None:
    if abs(mass - 1.0) > MASS_TOL:
        raise NormalizationError(f"total mass {mass!r} differs from 1")


def cumulative(density) -> PiecewiseLinearFn:
    """Cumulative distribution F(x) = mass of (-inf, x].

    A piecewise-constant density gives a continuous piecewise-linear F whose
    slope on each cell equals the cell value; an atomic measure gives a
    right-continuous step function with a jump at every atom.
    """
    if isinstance(density, AtomicMeasure):
        _check_unit_mass(density.total_mass())
        x = density.positions
        levels = np.cumsum(density.masses)
        end = density.terminal if density.terminal is not None and density.terminal > x[-1] else x[-1] + 1.0
        return StepCumulative(
            np.append(x, end),
            levels,
            levels,
            left=0.0,
            right=1.0,
            side="right",
            atoms_terminal=density.terminal,
        )
    if not isinstance(density, PiecewiseConstantFn):
        raise ConfigError(f"cannot build a cumulative from {type(density).__name__}")
    if np.any(density.values < 0):
        raise ConfigError("cumulative needs a non-negative density")
    _check_unit_mass(density.integral())
    nodes = np.concatenate([[0.0], np.cumsum(density.values * density.widths)])
    return PiecewiseLinearFn.continuous(density.breakpoints, nodes, left=0.0, right=1.0)


def pseudo_inverse(F: PiecewiseLinearFn) -> PiecewiseLinearFn:
    """X(z) = inf{x : F(x) >= z} on [0, 1], left-continuous.

    Flat stretches of F (vacuum) become jumps of X and jumps of F (atoms)
    become flat pieces of X; both are stored exactly. The cumulative of an
    atomic measure gives X = x_j on (j l, (j+1) l], except X(1) = x_N.
    """
    if isinstance(F, StepCumulative):
        levels = np.concatenate([[0.0], F.start])
        atoms = F.breakpoints[:-1]
        last = F.atoms_terminal if F.atoms_terminal is not None else float(atoms[-1])
        return PiecewiseLinearFn(levels, atoms, atoms, left=float(atoms[0]), right=last, side="left", terminal=last)

    z_bps = [0.0]
    x_start, x_end = [], []
    z_prev = float(F.left)
    b = F.breakpoints

    def push(z_hi, xa, xb):
        nonlocal z_prev
        # rounding in the cumulative sums may overshoot or fall just short of 1
        z_hi = 1.0 if z_hi >= 1.0 - MASS_TOL else z_hi
        if z_hi > z_prev:
            z_bps.append(z_hi)
            x_start.append(xa)
            x_end.append(xb)
            z_prev = z_hi

    for k in range(F.start.size):
        push(float(F.start[k]), b[k], b[k])  # jump of F at b_k
        push(float(F.end[k]), b[k], b[k + 1])  # increasing piece
    push(float(F.right), b[-1], b[-1])
    if len(z_bps) < 2:
        raise ConfigError("cumulative is constant; no pseudo-inverse")
    return PiecewiseLinearFn(np.array(z_bps), x_start, x_end, left=float(x_start[0]), right=float(x_end[-1]), side="left")


def support_bound(config_at_0: ParticleConfig, t: float, v_max: float) -> tuple[float, float]:
    """K_t = [x_0(0), x_N(0) + t v_max], which contains every snapshot up to time t."""
    if t < 0:
        raise ConfigError(f"time must be non-negative, got {t}")
    x = config_at_0.positions
    return float(x[0]), float(x[-1] + t * v_max)
