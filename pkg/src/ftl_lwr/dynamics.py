"""Follow-the-Leader dynamics and a stiff implicit integrator.

The system is available in three equivalent forms: positions x_j, discrete
densities rho_j = l / (x_{j+1} - x_j) and inverse densities y_j = 1 / rho_j.
Positions are the canonical state. In every form the Jacobian is upper
bidiagonal, since vehicle j only looks at vehicle j + 1, so each Newton
iteration costs O(N).

The default method is TR-BDF2: a trapezoidal stage to t + gamma h followed by
a BDF2 stage, gamma = 2 - sqrt(2), both sharing the Newton matrix
I - (gamma / 2) h J. It is L-stable and second order, with an embedded third
order solution for error control.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from .atomize import ParticleConfig, _require_admissible
from .errors import ConfigError, IntegrationError, StateError
from .velocity import VelocityModel

TRBDF2 = "implicit_trapezoid_bdf2"
BACKWARD_EULER = "backward_euler"
EXPLICIT_RK = "explicit_rk_oracle"
METHODS = (TRBDF2, BACKWARD_EULER, EXPLICIT_RK)

FORM_X = "x"
FORM_Y = "y"
FORM_RHO = "rho"

# relative slack for the minimum-gap bound at accepted steps
GAP_SLACK = 1e-8
# tolerance for invariant checks on reported snapshots
INVARIANT_TOL = 1e-6
MIN_STEP = 1e-14

_GAMMA = 2.0 - math.sqrt(2.0)
_D = _GAMMA / 2.0
_W = math.sqrt(2.0) / 4.0
# BDF2 stage: u1 = _A1 u_gamma - _A0 u0 + _D h f(u1)
_A1 = 1.0 / (_GAMMA * (2.0 - _GAMMA))
_A0 = (1.0 - _GAMMA) ** 2 / (_GAMMA * (2.0 - _GAMMA))


# -- right-hand sides --------------------------------------------------------


def _positions(config) -> np.ndarray:
    return config.positions if isinstance(config, ParticleConfig) else np.asarray(config, dtype=float)


def ftl_rhs_positions(config, model: VelocityModel) -> np.ndarray:
    """Vehicle speeds: v(l / gap_j) for followers, v_max for the leader."""
    x = _positions(config)
    gaps = np.diff(x)
    if np.any(~(gaps > 0)):
        raise StateError(f"non-positive gap at index {int(np.argmin(gaps))}")
    return _rhs_x(x, model)


def ftl_rhs_density(rhos, model: VelocityModel, n: int) -> np.ndarray:
    """Rates of the discrete densities rho_0..rho_{N-1}."""
    rho = np.asarray(rhos, dtype=float)
    if rho.shape != (n,):
        raise ConfigError(f"expected {n} densities, got shape {rho.shape}")
    if np.any(~(rho > 0)):
        raise StateError(f"non-positive density at index {int(np.argmin(rho))}")
    return _rhs_rho(rho, model)


def ftl_rhs_inverse_density(ys, model: VelocityModel, n: int) -> np.ndarray:
    """Rates of the inverse densities y_0..y_{N-1}, with V(y) = v(1 / y)."""
    y = np.asarray(ys, dtype=float)
    if y.shape != (n,):
        raise ConfigError(f"expected {n} inverse densities, got shape {y.shape}")
    if np.any(~(y >= 1.0 - 1e-12)):
        raise StateError(f"inverse density below 1 at index {int(np.argmin(y))}")
    return _rhs_y(y, model)


def _rhs_x(x, model):
    n = x.size - 1
    out = np.empty_like(x)
    out[:-1] = model.v(1.0 / (n * np.diff(x)))
    out[-1] = model.v_max
    return out


def _jac_x(x, model):
    n = x.size - 1
    rho = 1.0 / (n * np.diff(x))
    dj = model.dv(rho) * rho**2 * n
    return np.append(dj, 0.0), -dj


def _rhs_y(y, model):
    n = y.size
    V = model.v(1.0 / y)
    out = np.empty_like(y)
    out[:-1] = n * (V[1:] - V[:-1])
    out[-1] = n * (model.v_max - V[-1])
    return out


def _jac_y(y, model):
    n = y.size
    dV = -model.dv(1.0 / y) / y**2
    return -n * dV, n * dV[1:]


def _rhs_rho(rho, model):
    n = rho.size
    v = model.v(rho)
    ahead = np.append(v[1:], model.v_max)
    return n * rho**2 * (v - ahead)


def _jac_rho(rho, model):
    n = rho.size
    v = model.v(rho)
    dv = model.dv(rho)
    ahead = np.append(v[1:], model.v_max)
    diag = n * (2.0 * rho * (v - ahead) + rho**2 * dv)
    return diag, -n * rho[:-1] ** 2 * dv[1:]


# -- settings and results ------------------------------------------------------


@dataclass(frozen=True)
class IntegratorSettings:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    initial_step: float | None = None
    max_step: float = math.inf
    newton_tol: float = 1e-12
    newton_max_iter: int = 25
    method: str = TRBDF2

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.newton_tol > 0):
            raise ConfigError("tolerances must be positive")
        if not self.max_step > 0:
            raise ConfigError("max_step must be positive")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ConfigError("initial_step must be positive")
        if self.newton_max_iter < 1:
            raise ConfigError("newton_max_iter must be at least 1")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")


@dataclass
class IntegratorStats:
    steps: int = 0
    rejected: int = 0
    newton_iterations: int = 0
    max_residual: float = 0.0
    rhs_evaluations: int = 0


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of one FtL run; row k of ``positions`` is the state at ``times[k]``."""

    times: np.ndarray
    positions: np.ndarray
    stats: IntegratorStats = field(default_factory=IntegratorStats)

    def __len__(self):
        return self.times.size

    @property
    def n(self) -> int:
        return self.positions.shape[1] - 1

    def snapshot(self, k: int) -> ParticleConfig:
        return ParticleConfig(self.positions[k])

    @property
    def states(self) -> list[ParticleConfig]:
        return [self.snapshot(k) for k in range(len(self))]

    def at(self, t: float) -> ParticleConfig:
        hits = np.flatnonzero(self.times == t)
        if hits.size == 0:
            raise KeyError(f"no snapshot at t={t}")
        return self.snapshot(int(hits[0]))

    def to_csv(self, path_or_file) -> None:
        if not hasattr(path_or_file, "write"):
            with open(path_or_file, "w", newline="") as fh:
                self.to_csv(fh)
            return
        writer = csv.writer(path_or_file)
        writer.writerow(["t"] + [f"x_{j}" for j in range(self.n + 1)])
        for t, row in zip(self.times, self.positions):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


# -- the implicit integrator -----------------------------------------------------


class _NewtonFailure(Exception):
    pass


@dataclass
class _Problem:
    rhs: object
    jac: object
    admissible: object


def _solve(diag, sup, rhs_vec, scale):
    """Solve (I - scale J) z = rhs_vec for upper-bidiagonal J = (diag, sup)."""
    ab = np.empty((2, diag.size))
    ab[0, 0] = 0.0
    ab[0, 1:] = -scale * sup
    ab[1] = 1.0 - scale * diag
    return solve_banded((0, 1), ab, rhs_vec, check_finite=False)


def _newton(problem, settings, stats, base, scale, guess):
    """Solve z - scale f(z) = base by Newton's method."""
    z = guess
    for _ in range(settings.newton_max_iter):
        with np.errstate(all="ignore"):
            fz = problem.rhs(z)
            residual = z - scale * fz - base
            diag, sup = problem.jac(z)
        stats.rhs_evaluations += 1
        if not (np.all(np.isfinite(residual)) and np.all(np.isfinite(diag)) and np.all(np.isfinite(sup))):
            raise _NewtonFailure("non-finite residual")
        delta = _solve(diag, sup, -residual, scale)
        z = z + delta
        stats.newton_iterations += 1
        size = float(np.max(np.abs(delta)))
        if size <= settings.newton_tol * max(1.0, float(np.max(np.abs(z)))):
            stats.max_residual = max(stats.max_residual, float(np.max(np.abs(residual))))
            return z
    raise _NewtonFailure(f"no convergence after {settings.newton_max_iter} iterations")


def _error_norm(err, u0, u1, settings):
    scale = settings.abs_tol + settings.rel_tol * np.maximum(np.abs(u0), np.abs(u1))
    return float(np.max(np.abs(err) / scale))


def _hermite(t0, t1, u0, u1, f0, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s**2 * (3 - 2 * s)
    h11 = s**2 * (s - 1)
    return h00 * u0 + h10 * h * f0 + h01 * u1 + h11 * h * f1


def _step_trbdf2(problem, settings, stats, u0, f0, h):
    z = _newton(problem, settings, stats, u0 + _D * h * f0, _D * h, u0 + _GAMMA * h * f0)
    fg = problem.rhs(z)
    u1 = _newton(problem, settings, stats, _A1 * z - _A0 * u0, _D * h, z + (1.0 - _GAMMA) * h * fg)
    f1 = problem.rhs(u1)
    stats.rhs_evaluations += 2
    raw = (h / 3.0) * ((1.0 - 4.0 * _W) * f0 + fg - 2.0 * _D * f1)
    # filter through the Newton matrix so the estimate stays bounded on stiff modes
    diag, sup = problem.jac(u1)
    err = _solve(diag, sup, raw, _D * h)
    return u1, f1, err, 3


def _step_backward_euler(problem, settings, stats, u0, f0, h):
    u1 = _newton(problem, settings, stats, u0, h, u0 + h * f0)
    f1 = problem.rhs(u1)
    stats.rhs_evaluations += 1
    return u1, f1, 0.5 * h * (f1 - f0), 2


def _integrate_implicit(problem, u0, t_end, output_times, settings):
    step = _step_trbdf2 if settings.method == TRBDF2 else _step_backward_euler
    stats = IntegratorStats()
    out = np.empty((output_times.size, u0.size))
    k = 0
    while k < output_times.size and output_times[k] <= 0.0:
        out[k] = u0
        k += 1
    t, u = 0.0, u0.copy()
    f = problem.rhs(u)
    h = settings.initial_step or min(1e-3 * t_end, settings.max_step)
    while t < t_end:
        h = min(h, settings.max_step, t_end - t)
        if t_end - (t + h) < 1e-12 * t_end:
            h = t_end - t
        try:
            u1, f1, err, order = step(problem, settings, stats, u, f, h)
            ok = problem.admissible(u1)
        except _NewtonFailure:
            ok, err = False, None
        if not ok:
            stats.rejected += 1
            h *= 0.5
            if h < MIN_STEP:
                raise IntegrationError(f"step size underflow at t={t:.6g} (Newton failure or invariant loss)")
            continue
        norm = _error_norm(err, u, u1, settings)
        if norm > 1.0:
            stats.rejected += 1
            h *= max(0.2, 0.9 * norm ** (-1.0 / order))
            if h < MIN_STEP:
                raise IntegrationError(f"step size underflow at t={t:.6g} (error control)")
            continue
        t1 = t_end if h == t_end - t else t + h
        while k < output_times.size and output_times[k] <= t1:
            tk = output_times[k]
            out[k] = u1 if tk == t1 else _hermite(t, t1, u, u1, f, f1, tk)
            k += 1
        t, u, f = t1, u1, f1
        stats.steps += 1
        h *= 5.0 if norm == 0 else min(5.0, max(0.2, 0.9 * norm ** (-1.0 / order)))
    return out, stats


def _integrate_explicit(problem, u0, t_end, output_times, settings):
    stats = IntegratorStats()
    sol = solve_ivp(
        lambda _t, u: problem.rhs(u),
        (0.0, t_end),
        u0,
        method="DOP853",
        t_eval=output_times,
        rtol=settings.rel_tol,
        atol=settings.abs_tol,
        max_step=settings.max_step,
        first_step=settings.initial_step,
    )
    if not sol.success:
        raise IntegrationError(f"explicit oracle failed: {sol.message}")
    stats.steps = int(sol.t.size)
    stats.rhs_evaluations = int(sol.nfev)
    return sol.y.T.copy(), stats


def _problem(form, model, u0):
    if form == FORM_X:
        floor = min(1.0 / (u0.size - 1), float(np.min(np.diff(u0)))) * (1.0 - GAP_SLACK)
        return _Problem(lambda u: _rhs_x(u, model), lambda u: _jac_x(u, model), lambda u: bool(np.min(np.diff(u)) >= floor))
    if form == FORM_Y:
        floor = min(1.0, float(np.min(u0))) * (1.0 - GAP_SLACK)
        return _Problem(lambda u: _rhs_y(u, model), lambda u: _jac_y(u, model), lambda u: bool(np.min(u) >= floor))
    if form == FORM_RHO:
        ceil = max(1.0, float(np.max(u0))) * (1.0 + GAP_SLACK)
        return _Problem(
            lambda u: _rhs_rho(u, model),
            lambda u: _jac_rho(u, model),
            lambda u: bool(np.max(u) <= ceil and np.min(u) > 0),
        )
    raise ConfigError(f"unknown formulation {form!r}")


def integrate(
    config: ParticleConfig,
    model: VelocityModel,
    t_end: float,
    settings: IntegratorSettings | None = None,
    output_times=None,
    form: str = FORM_X,
    check: bool = True,
) -> Trajectory:
    """Integrate the FtL system from ``config`` over [0, t_end].

    ``form`` selects the integrated variables (``"x"``, ``"y"`` or ``"rho"``);
    positions are always reported, rebuilt from the exactly known leader
    trajectory x_N(t) = x_N(0) + v_max t in the density forms. Snapshots at
    ``output_times`` (default ``[0, t_end]``) come from cubic Hermite
    interpolation between accepted steps. With ``check=False`` an initial
    configuration violating gap >= l is accepted; the minimum-gap monitor then
    uses the initial minimum gap as its floor.
    """
    settings = settings or IntegratorSettings()
    if not t_end > 0:
        raise ConfigError(f"t_end must be positive, got {t_end}")
    if check:
        _require_admissible(config, "initial configuration")
    elif np.any(~(config.gaps > 0)):
        raise StateError("initial positions are not strictly increasing")
    times = np.asarray([0.0, t_end] if output_times is None else output_times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] > t_end:
        raise ConfigError("output times must ascend strictly within [0, t_end]")

    n = config.n
    x0 = config.positions
    if form == FORM_X:
        u0 = x0.copy()
    elif form == FORM_Y:
        u0 = config.inverse_densities.copy()
    elif form == FORM_RHO:
        u0 = config.densities.copy()
    else:
        raise ConfigError(f"unknown formulation {form!r}")
    problem = _problem(form, model, u0)
    runner = _integrate_explicit if settings.method == EXPLICIT_RK else _integrate_implicit
    states, stats = runner(problem, u0, float(t_end), times, settings)

    if form == FORM_X:
        positions = states
    else:
        gaps = states / n if form == FORM_Y else 1.0 / (n * states)
        leader = x0[-1] + model.v_max * times
        tail = np.cumsum(gaps[:, ::-1], axis=1)[:, ::-1]
        positions = np.column_stack([leader[:, None] - tail, leader])
    _check_snapshots(positions, times, min(1.0, n * float(np.min(config.gaps))))
    return Trajectory(times, positions, stats)


def _check_snapshots(positions, times, floor):
    """Reject trajectories whose minimum gap, in units of l, drops below ``floor``."""
    if not np.all(np.isfinite(positions)):
        raise IntegrationError("trajectory contains non-finite positions")
    n = positions.shape[1] - 1
    gaps = np.diff(positions, axis=1)
    worst = float(np.min(gaps)) * n
    if worst < floor - INVARIANT_TOL:
        k = int(np.argmin(np.min(gaps, axis=1)))
        raise IntegrationError(f"minimum gap fell to {worst:.9g} l at t={times[k]:.6g}")
