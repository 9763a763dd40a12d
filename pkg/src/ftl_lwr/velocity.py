"""Velocity laws v(rho), the LWR flux f(rho) = rho v(rho), and assumption checks.

Densities are dimensionless occupancies in [0, 1] (rho_max = 1). All
evaluation methods on :class:`VelocityModel` are vectorized and perform no
domain check; the module-level :func:`eval_velocity` / :func:`eval_flux` are the
checked scalar entry points.

Beyond rho = 1 the methods use the linear extension ``v(1) + v'(1-) (rho - 1)``.
Physical states never go there, but Newton iterates of the implicit integrator
may step slightly past it and need a smooth, finite continuation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, ModelError

GREENSHIELDS = "greenshields"
BONZANI_MUSSONE = "bonzani"
LINEAR = "linear"
TABULATED = "table"

_KINDS = (GREENSHIELDS, BONZANI_MUSSONE, LINEAR, TABULATED)

# rho v'(rho) for Bonzani-Mussone turns around at the golden-ratio conjugate
BONZANI_V2_TURN = (math.sqrt(5.0) - 1.0) / 2.0
# f'(rho) = e^{-rho/(1-rho)} (1 - rho/(1-rho)^2) vanishes here
BONZANI_FLUX_ARGMAX = (3.0 - math.sqrt(5.0)) / 2.0

_TABLE_FD_STEP = 1e-7


@dataclass(frozen=True)
class VelocityModel:
    """A traffic velocity law on [0, rho_max] with rho_max = 1.

    Use the constructors :meth:`greenshields`, :meth:`bonzani_mussone`,
    :meth:`linear` and :meth:`tabulated` rather than the raw initializer.
    """

    kind: str
    speed: float = 1.0
    table_rho: tuple = field(default=(), repr=False)
    table_v: tuple = field(default=(), repr=False)

    rho_max = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ModelError(f"unknown velocity kind {self.kind!r}")
        if self.kind == LINEAR and not (self.speed > 0 and math.isfinite(self.speed)):
            raise ModelError(f"linear family needs a positive finite v_max, got {self.speed}")
        if self.kind == TABULATED:
            rho = np.asarray(self.table_rho, dtype=float)
            v = np.asarray(self.table_v, dtype=float)
            if rho.ndim != 1 or rho.size < 2 or rho.shape != v.shape:
                raise ModelError("a velocity table needs at least two (rho, v) rows")
            if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(v))):
                raise ModelError("velocity table contains non-finite entries")
            if rho[0] != 0.0 or rho[-1] != 1.0 or np.any(np.diff(rho) <= 0):
                raise ModelError("velocity table densities must ascend strictly from 0 to 1")

    # -- constructors -----------------------------------------------------

    @classmethod
    def greenshields(cls) -> VelocityModel:
        return cls(GREENSHIELDS)

    @classmethod
    def bonzani_mussone(cls) -> VelocityModel:
        return cls(BONZANI_MUSSONE)

    @classmethod
    def linear(cls, v_max: float) -> VelocityModel:
        """v(rho) = v_max (1 - rho)."""
        return cls(LINEAR, speed=float(v_max))

    @classmethod
    def tabulated(cls, rho, v) -> VelocityModel:
        """Piecewise-linear interpolation of ``(rho, v)`` samples."""
        return cls(TABULATED, table_rho=tuple(map(float, rho)), table_v=tuple(map(float, v)))

    # -- evaluation -------------------------------------------------------

    @property
    def v_max(self) -> float:
        return float(self.v(0.0))

    @cached_property
    def _table(self):
        return np.asarray(self.table_rho), np.asarray(self.table_v)

    @cached_property
    def _slope_at_jam(self) -> float:
        """Left derivative v'(1-)."""
        if self.kind == GREENSHIELDS:
            return -1.0
        if self.kind == LINEAR:
            return -self.speed
        if self.kind == BONZANI_MUSSONE:
            return 0.0
        rho, v = self._table
        return float((v[-1] - v[-2]) / (rho[-1] - rho[-2]))

    def v(self, rho):
        rho = np.asarray(rho, dtype=float)
        inside = np.minimum(rho, 1.0)
        if self.kind == GREENSHIELDS:
            out = 1.0 - inside
        elif self.kind == LINEAR:
            out = self.speed * (1.0 - inside)
        elif self.kind == BONZANI_MUSSONE:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = np.where(inside < 1.0, np.exp(inside / (inside - 1.0)), 0.0)
        else:
            out = np.interp(inside, *self._table)
        excess = rho - inside
        if np.any(excess > 0):
            out = out + self._slope_at_jam * excess
        return out[()] if out.ndim == 0 else out

    def dv(self, rho):
        """v'(rho), analytic except for tables (central differences, step 1e-7)."""
        rho = np.asarray(rho, dtype=float)
        inside = np.minimum(rho, 1.0)
        if self.kind == GREENSHIELDS:
            out = np.full_like(inside, -1.0)
        elif self.kind == LINEAR:
            out = np.full_like(inside, -self.speed)
        elif self.kind == BONZANI_MUSSONE:
            # v' = -v / (1 - rho)^2, evaluated without differencing
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                gap = 1.0 - inside
                out = np.where(gap > 0, -np.exp(-inside / gap) / gap**2, 0.0)
                out = np.where(np.isfinite(out), out, 0.0)
        else:
            h = _TABLE_FD_STEP
            lo = np.clip(inside - h, 0.0, 1.0)
            hi = np.clip(inside + h, 0.0, 1.0)
            rho_t, v_t = self._table
            out = (np.interp(hi, rho_t, v_t) - np.interp(lo, rho_t, v_t)) / (hi - lo)
        out = np.where(rho > 1.0, self._slope_at_jam, out)
        return out[()] if out.ndim == 0 else out

    def flux(self, rho):
        rho = np.asarray(rho, dtype=float)
        return rho * self.v(rho)

    def dflux(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.v(rho) + rho * self.dv(rho)

    def flux_critical_points(self) -> np.ndarray:
        """Interior points where f may attain an extremum on a subinterval of [0, 1].

        Together with the interval endpoints these locate the exact min and max
        of f on any [a, b] subset of [0, 1].
        """
        if self.kind in (GREENSHIELDS, LINEAR):
            return np.array([0.5])
        if self.kind == BONZANI_MUSSONE:
            return np.array([BONZANI_FLUX_ARGMAX])
        rho, v = self._table
        # f = rho (a + b rho) on each segment; its vertex is -a / (2b)
        b = np.diff(v) / np.diff(rho)
        a = v[:-1] - b * rho[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            vertex = np.where(b != 0, -a / (2.0 * b), np.nan)
        inside = (vertex > rho[:-1]) & (vertex < rho[1:])
        return np.unique(np.concatenate([rho[1:-1], vertex[inside]]))

    @cached_property
    def max_abs_dflux(self) -> float:
        """max |f'| over [0, 1], used for CFL step selection."""
        if self.kind in (GREENSHIELDS, LINEAR):
            return self.v_max
        grid = np.linspace(0.0, 1.0, 20001)
        if self.kind == TABULATED:
            grid = np.unique(np.concatenate([grid, self._table[0]]))
        return float(np.max(np.abs(self.dflux(grid))))

    @cached_property
    def lipschitz_L(self) -> float:
        if self.kind == GREENSHIELDS:
            return 1.0
        if self.kind == LINEAR:
            return self.speed
        if self.kind == BONZANI_MUSSONE:
            # |v'| = s^2 e^{1-s} with s = 1/(1-rho) peaks at s = 2
            return 4.0 / math.e
        rho, v = self._table
        return float(np.max(np.abs(np.diff(v) / np.diff(rho))))

    @cached_property
    def satisfies_v2(self) -> bool:
        return check_assumptions(self, 1024).v2_holds

    @property
    def is_concave(self) -> bool:
        """Strict concavity of the flux, implied by (V1) together with (V2)."""
        if self.kind in (GREENSHIELDS, LINEAR):
            return True
        if self.kind == BONZANI_MUSSONE:
            return False
        report = check_assumptions(self, 1024)
        return report.v1_holds and report.v2_holds

    def describe(self) -> str:
        if self.kind == LINEAR:
            return f"linear:{self.speed:g}"
        if self.kind == TABULATED:
            return f"table[{len(self.table_rho)} rows]"
        return self.kind


def _check_density(rho) -> np.ndarray:
    arr = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"density must lie in [0, 1], got {rho!r}")
    return arr


def eval_velocity(model: VelocityModel, rho):
    """Return v(rho); raises :class:`DomainError` outside [0, 1]."""
    _check_density(rho)
    return model.v(rho)


def eval_flux(model: VelocityModel, rho):
    """Return f(rho) = rho v(rho); raises :class:`DomainError` outside [0, 1]."""
    _check_density(rho)
    return model.flux(rho)


@dataclass(frozen=True)
class AssumptionReport:
    v1_holds: bool
    v2_holds: bool
    estimated_L: float
    estimated_c: float
    v_at_jam: float
    grid: np.ndarray = field(repr=False)
    rho_dv: np.ndarray = field(repr=False)


def check_assumptions(model: VelocityModel, grid_n: int = 1024, tol: float = 1e-9) -> AssumptionReport:
    """Sample v and v' and test the standing assumptions numerically.

    (V1) is reported as holding when v(1) = 0, the samples of v decrease
    strictly and the largest sampled v' is strictly negative. (V2) holds when
    rho v'(rho) is non-increasing along the grid within ``tol``. Tabulated
    models are checked on their own breakpoints.
    """
    if grid_n < 16:
        raise ConfigError(f"grid_n must be at least 16, got {grid_n}")
    if model.kind == TABULATED:
        grid, values = model._table
        slopes = np.gradient(values, grid)
    else:
        grid = np.linspace(0.0, 1.0, grid_n + 1)
        values = np.asarray(model.v(grid))
        slopes = np.asarray(model.dv(grid))
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(slopes))):
        raise ModelError("velocity model produced non-finite samples")

    estimated_c = float(np.max(slopes))
    v_at_jam = float(values[-1])
    decreasing = bool(np.all(np.diff(values) < 0))
    v1 = abs(v_at_jam) <= 1e-12 and decreasing and estimated_c < 0.0

    rho_dv = grid * slopes
    v2 = bool(np.all(np.diff(rho_dv) <= tol))
    if model.kind == TABULATED:
        estimated_L = float(np.max(np.abs(np.diff(values) / np.diff(grid))))
    else:
        estimated_L = float(np.max(np.abs(slopes)))
    return AssumptionReport(v1, v2, estimated_L, estimated_c, v_at_jam, grid, rho_dv)


def load_velocity_table(path) -> VelocityModel:
    """Read a two-column CSV ``rho,v`` (an optional non-numeric header row is skipped)."""
    rows = []
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            if not record or record[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(record[0]), float(record[1])))
            except (ValueError, IndexError):
                if rows:
                    raise ModelError(f"malformed velocity table row {record!r} in {path}")
    if not rows:
        raise ModelError(f"no rows in velocity table {path}")
    rho, v = zip(*rows)
    return VelocityModel.tabulated(rho, v)


def parse_velocity(text: str) -> VelocityModel:
    """Parse ``greenshields``, ``bonzani``, ``linear:<v_max>`` or ``table:<path>``."""
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    if name == GREENSHIELDS and not arg:
        return VelocityModel.greenshields()
    if name in (BONZANI_MUSSONE, "bonzani-mussone", "bonzanimussone") and not arg:
        return VelocityModel.bonzani_mussone()
    if name == LINEAR and arg:
        try:
            return VelocityModel.linear(float(arg))
        except ValueError:
            raise ConfigError(f"bad v_max in velocity {text!r}") from None
    if name == TABULATED and arg:
        path = Path(arg)
        if not path.is_file():
            raise ConfigError(f"velocity table {arg!r} not found")
        return load_velocity_table(path)
    raise ConfigError(f"unrecognized velocity {text!r}")
