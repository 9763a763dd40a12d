"""Reference solver for rho_t + f(rho)_x = 0: first-order Godunov plus exact Riemann fans.

The Godunov flux takes the exact min/max of f between the two states. Those
extrema sit at the states themselves or at the model's interior critical
points (:meth:`VelocityModel.flux_critical_points`), so no iterative search
is needed, whether or not f is concave.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .atomize import InitialDensity
from .errors import ConfigError, CoverageError, NumericalError, UnsupportedFluxError
from .piecewise import ROAD, PiecewiseConstantFn
from .velocity import VelocityModel

ZERO = "zero"
TRANSMISSIVE = "transmissive"
MONITOR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Cell averages on the uniform grid x_left + dx * [k, k+1)."""

    x_left: float
    dx: float
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ConfigError("a grid density needs at least one cell")
        if not self.dx > 0:
            raise ConfigError(f"dx must be positive, got {self.dx}")
        object.__setattr__(self, "values", v)

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def edges(self) -> np.ndarray:
        return self.x_left + self.dx * np.arange(self.n_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.x_left + self.dx * (np.arange(self.n_cells) + 0.5)

    def mass(self) -> float:
        return float(np.sum(self.values) * self.dx)

    def to_piecewise(self) -> PiecewiseConstantFn:
        return PiecewiseConstantFn(self.edges, self.values, ROAD)

    def to_csv(self, path_or_file) -> None:
        if not hasattr(path_or_file, "write"):
            with open(path_or_file, "w", newline="") as fh:
                self.to_csv(fh)
            return
        writer = csv.writer(path_or_file)
        writer.writerow(("x_center", "rho"))
        writer.writerows((repr(float(x)), repr(float(r))) for x, r in zip(self.centers, self.values))


def godunov_flux(model: VelocityModel, rho_left, rho_right):
    """min of f on [rho_l, rho_r] if rho_l <= rho_r, else max of f on [rho_r, rho_l]."""
    rl = np.asarray(rho_left, dtype=float)
    rr = np.asarray(rho_right, dtype=float)
    rl, rr = np.broadcast_arrays(rl, rr)
    fl, fr = model.flux(rl), model.flux(rr)
    lo, hi = np.minimum(rl, rr), np.maximum(rl, rr)
    rising = rl <= rr
    out = np.where(rising, np.minimum(fl, fr), np.maximum(fl, fr))
    for c in model.flux_critical_points():
        fc = float(model.flux(c))
        inside = (lo <= c) & (c <= hi)
        out = np.where(inside & rising, np.minimum(out, fc), out)
        out = np.where(inside & ~rising, np.maximum(out, fc), out)
    return out[()] if out.ndim == 0 else out


@dataclass
class GodunovStats:
    steps: int = 0
    dt: float = 0.0
    max_tv_increase: float = 0.0
    max_principle_excess: float = 0.0
    boundary_outflow: float = 0.0

    @property
    def tvd_ok(self) -> bool:
        return self.max_tv_increase <= MONITOR_TOL

    @property
    def max_principle_ok(self) -> bool:
        return self.max_principle_excess <= MONITOR_TOL


@dataclass
class LwrSolution:
    snapshots: list
    stats: GodunovStats = field(default_factory=GodunovStats)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def at(self, t: float) -> GridDensity:
        for snap in self.snapshots:
            if snap.t == t:
                return snap
        raise KeyError(f"no snapshot at t={t}")


def _tv(values: np.ndarray, boundary: str) -> float:
    if boundary == ZERO:
        values = np.concatenate([[0.0], values, [0.0]])
    return float(np.sum(np.abs(np.diff(values))))


def godunov_evolve(
    initial: GridDensity,
    model: VelocityModel,
    output_times,
    cfl: float = 0.45,
    dt: float | None = None,
    boundary: str = ZERO,
) -> LwrSolution:
    """Advance ``initial`` with the Godunov scheme, recording a snapshot at each output time.

    ``boundary`` is ``"zero"`` (empty road beyond the grid) or
    ``"transmissive"`` (copy the edge cells). TV and the range of the initial
    data are monitored after every step; the final step of each output
    interval is shortened to land on the requested time exactly.
    """
    if boundary not in (ZERO, TRANSMISSIVE):
        raise ConfigError(f"unknown boundary {boundary!r}")
    speed = model.max_abs_dflux
    if dt is None:
        if not 0 < cfl <= 1:
            raise ConfigError(f"cfl must lie in (0, 1], got {cfl}")
        dt = cfl * initial.dx / speed
    elif not (dt > 0 and dt * speed <= initial.dx):
        raise ConfigError(f"dt={dt} violates the CFL condition (limit {initial.dx / speed:.6g})")
    times = np.asarray(output_times, dtype=float)
    if times.size == 0 or np.any(times < initial.t) or np.any(np.diff(times) <= 0):
        raise ConfigError("output times must be ascending and not before the initial time")

    u = initial.values.copy()
    lo_bound = min(float(u.min()), 0.0) if boundary == ZERO else float(u.min())
    hi_bound = float(u.max())
    stats = GodunovStats(dt=dt)
    tv = _tv(u, boundary)
    t = initial.t
    ratio_full = dt / initial.dx
    snapshots = []
    padded = np.empty(u.size + 2)
    for target in times:
        while t < target:
            h = min(dt, target - t)
            if target - (t + h) < 1e-12 * max(1.0, abs(target)):
                h = target - t
            padded[1:-1] = u
            if boundary == ZERO:
                padded[0] = padded[-1] = 0.0
            else:
                padded[0], padded[-1] = u[0], u[-1]
            flux = godunov_flux(model, padded[:-1], padded[1:])
            ratio = ratio_full * h / dt
            if boundary == ZERO:
                stats.boundary_outflow += h * (abs(flux[0]) + abs(flux[-1]))
            u = u - ratio * np.diff(flux)
            t = target if h == target - t else t + h
            stats.steps += 1
            new_tv = _tv(u, boundary)
            stats.max_tv_increase = max(stats.max_tv_increase, new_tv - tv)
            tv = new_tv
            excess = max(float(u.max()) - hi_bound, lo_bound - float(u.min()))
            stats.max_principle_excess = max(stats.max_principle_excess, excess)
            if not np.all(np.isfinite(u)):
                raise NumericalError(f"Godunov update produced non-finite values at t={t}")
        snapshots.append(GridDensity(initial.x_left, initial.dx, u.copy(), float(target)))
    return LwrSolution(snapshots, stats)


def reference_grid(rho_bar: InitialDensity, model: VelocityModel, t_end: float, dx: float):
    """(x_left, n_cells) covering supp(rho_bar) + [0, t_end v_max] plus a margin.

    The support of the exact solution never leaves that set, but the
    first-order scheme smears fronts into tails of width ~ sqrt(t dx). The
    margin, two cells plus eight such widths on each side, keeps the mass
    reaching the boundary below rounding level.
    """
    if not dx > 0:
        raise ConfigError(f"dx must be positive, got {dx}")
    lo, hi = rho_bar.support
    margin = 2 * dx + 8.0 * math.sqrt(t_end * model.max_abs_dflux * dx)
    x_left = lo - margin
    x_right = hi + t_end * model.v_max + margin
    return x_left, int(math.ceil((x_right - x_left) / dx - 1e-9))


def sample_to_grid(f: PiecewiseConstantFn, x_left: float, dx: float, n_cells: int, t: float = 0.0) -> GridDensity:
    """Exact cell averages of ``f`` on the grid; the grid must cover supp f."""
    if n_cells < 1:
        raise ConfigError("grid needs at least one cell")
    lo, hi = f.support()
    x_right = x_left + dx * n_cells
    if lo < x_left or hi > x_right:
        raise CoverageError(f"grid [{x_left:g}, {x_right:g}] does not cover support [{lo:g}, {hi:g}]")
    edges = x_left + dx * np.arange(n_cells + 1)
    return GridDensity(x_left, dx, f.cell_averages(edges), t)


def solve_lwr(
    rho_bar: InitialDensity,
    model: VelocityModel,
    t_end: float,
    dx: float,
    cfl: float = 0.45,
    output_times=None,
    dt: float | None = None,
) -> LwrSolution:
    """Godunov solution of the Cauchy problem for compactly supported data.

    The domain is padded so that the support never reaches the boundary,
    which is modelled as empty road.
    """
    if not t_end > 0:
        raise ConfigError(f"t_end must be positive, got {t_end}")
    if output_times is None:
        output_times = [t_end]
    times = np.asarray(output_times, dtype=float)
    if times.size and times.max() > t_end:
        raise ConfigError("output times extend past t_end")
    x_left, n_cells = reference_grid(rho_bar, model, t_end, dx)
    initial = sample_to_grid(rho_bar.profile, x_left, dx, n_cells)
    if times.size and times[0] == 0.0:
        rest = godunov_evolve(initial, model, times[1:], cfl, dt) if times.size > 1 else LwrSolution([])
        rest.snapshots.insert(0, initial)
        return rest
    return godunov_evolve(initial, model, times, cfl, dt)


def riemann_exact(model: VelocityModel, rho_l: float, rho_r: float, t: float, x):
    """Entropy solution of the Riemann problem at (t, x) for a strictly concave flux.

    rho_l < rho_r gives a shock with Rankine-Hugoniot speed; rho_l > rho_r a
    rarefaction fan obtained by inverting f'.
    """
    if not model.is_concave:
        raise UnsupportedFluxError(f"exact Riemann fans need a concave flux; {model.describe()} is not")
    if not t > 0:
        raise ConfigError(f"t must be positive, got {t}")
    for r in (rho_l, rho_r):
        if not 0.0 <= r <= 1.0:
            raise ConfigError(f"Riemann states must lie in [0, 1], got {r}")
    x = np.asarray(x, dtype=float)
    xi = x / t
    if rho_l == rho_r:
        out = np.full_like(xi, rho_l)
    elif rho_l < rho_r:
        s = (model.flux(rho_r) - model.flux(rho_l)) / (rho_r - rho_l)
        out = np.where(xi < s, rho_l, rho_r)
    else:
        out = np.where(xi <= model.dflux(rho_l), rho_l, np.where(xi >= model.dflux(rho_r), rho_r, np.nan))
        fan = np.isnan(out)
        if np.any(fan):
            out[fan] = _invert_dflux(model, xi[fan], rho_r, rho_l)
    return out[()] if out.ndim == 0 else out


def _invert_dflux(model: VelocityModel, xi: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """rho in [lo, hi] with f'(rho) = xi, f' decreasing; bisection also handles kinks of tables."""
    if model.kind in ("greenshields", "linear"):
        return np.clip(0.5 * (1.0 - xi / model.v_max), lo, hi)
    a = np.full_like(xi, lo)
    b = np.full_like(xi, hi)
    for _ in range(64):
        m = 0.5 * (a + b)
        above = model.dflux(m) > xi
        a = np.where(above, m, a)
        b = np.where(above, b, m)
    return 0.5 * (a + b)


def riemann_grid(model: VelocityModel, rho_l: float, rho_r: float, x_left: float, dx: float, n_cells: int) -> GridDensity:
    """Riemann data with the jump at x = 0, as exact cell averages."""
    edges = x_left + dx * np.arange(n_cells + 1)
    frac_left = np.where(edges[1:] <= 0, 1.0, np.where(edges[:-1] >= 0, 0.0, -edges[:-1] / dx))
    return GridDensity(x_left, dx, rho_l * frac_left + rho_r * (1.0 - frac_left))
