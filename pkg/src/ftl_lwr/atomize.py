"""Initial particle configurations built from a macroscopic density.

Two schemes are provided: the equal-mass splitting of the initial density
(:func:`atomize_dfr`) and its midpoint perturbation
(:func:`atomize_midpoint_shift`), whose Eulerian density has unbounded total
variation as N grows while still converging weakly.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import AdmissibilityError, ConfigError, NormalizationError
from .piecewise import ROAD, PiecewiseConstantFn

MASS_TOL = 1e-12
# relative slack on gap >= l, absorbing rounding of exactly-tight configurations
GAP_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class ParticleConfig:
    """Ordered vehicle positions x_0 < ... < x_N, each vehicle of mass l = 1/N."""

    positions: np.ndarray

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise ConfigError("a configuration needs at least two vehicles")
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)

    @property
    def n(self) -> int:
        return self.positions.size - 1

    @property
    def l(self) -> float:  # noqa: E743 - the vehicle length is conventionally called l
        return 1.0 / self.n

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.positions)

    @property
    def densities(self) -> np.ndarray:
        """rho_j = l / (x_{j+1} - x_j), j = 0..N-1."""
        return self.l / self.gaps

    @property
    def inverse_densities(self) -> np.ndarray:
        """y_j = (x_{j+1} - x_j) / l."""
        return self.gaps * self.n

    def __len__(self):
        return self.positions.size

    def __repr__(self):
        return f"ParticleConfig(n={self.n}, x=[{self.positions[0]:g} .. {self.positions[-1]:g}])"


@dataclass(frozen=True)
class Violation:
    kind: str
    index: int
    magnitude: float


def validate_config(config: ParticleConfig, rtol: float = GAP_RTOL) -> list[Violation]:
    """List every violated configuration invariant; an empty list means admissible.

    Gaps are compared against ``l * (1 - rtol)``.
    """
    x = config.positions
    issues = []
    bad = np.flatnonzero(~np.isfinite(x))
    issues += [Violation("non_finite", int(j), float("nan")) for j in bad]
    if bad.size:
        return issues
    gaps = np.diff(x)
    for j in np.flatnonzero(gaps <= 0):
        issues.append(Violation("not_increasing", int(j), float(-gaps[j])))
    floor = config.l * (1.0 - rtol)
    for j in np.flatnonzero((gaps > 0) & (gaps < floor)):
        issues.append(Violation("gap_below_l", int(j), float(config.l - gaps[j])))
    return issues


def _require_admissible(config: ParticleConfig, what: str) -> ParticleConfig:
    issues = validate_config(config)
    if issues:
        first = issues[0]
        raise AdmissibilityError(
            f"{what}: {len(issues)} violation(s), first {first.kind} at gap {first.index} "
            f"(magnitude {first.magnitude:.3g})",
            issues,
        )
    return config


@dataclass(frozen=True, eq=False)
class InitialDensity:
    """Compactly supported piecewise-constant probability density bounded by 1."""

    profile: PiecewiseConstantFn

    def __post_init__(self):
        vals = self.profile.values
        if np.any(vals < 0) or np.any(vals > 1):
            raise ConfigError("initial density values must lie in [0, 1]")
        mass = self.profile.integral()
        if abs(mass - 1.0) > MASS_TOL:
            raise NormalizationError(f"initial density has mass {mass!r}, expected 1")

    @classmethod
    def from_cells(cls, breakpoints, values) -> InitialDensity:
        return cls(PiecewiseConstantFn(breakpoints, values, ROAD))

    @property
    def support(self) -> tuple[float, float]:
        return self.profile.support()

    @property
    def x_min(self) -> float:
        return self.support[0]

    @property
    def x_max(self) -> float:
        return self.support[1]

    @property
    def sup_norm(self) -> float:
        return float(np.max(self.profile.values))


def atomize_dfr(rho_bar: InitialDensity, n: int) -> ParticleConfig:
    """Split the mass of ``rho_bar`` into ``n`` consecutive intervals of mass 1/n.

    x_0 is the infimum of the support and, recursively, x_j is the supremum of
    the points x with mass(x_{j-1}, x) < 1/n; the last point is the supremum of
    the support. The cumulative distribution is inverted in exact rational
    arithmetic, so every returned position is the correctly rounded exact one.
    """
    if int(n) != n or n < 1:
        raise ConfigError(f"n must be a positive integer, got {n}")
    n = int(n)
    bps = [Fraction(float(b)) for b in rho_bar.profile.breakpoints]
    vals = [Fraction(float(v)) for v in rho_bar.profile.values]
    cum = [Fraction(0)]
    for v, a, b in zip(vals, bps[:-1], bps[1:]):
        cum.append(cum[-1] + v * (b - a))
    total = cum[-1]  # equals 1 up to the input's float representation

    lo, hi = rho_bar.support
    x = np.empty(n + 1)
    x[0], x[n] = lo, hi
    for j in range(1, n):
        level = total * j / n
        # first breakpoint index i with cum[i] >= level; the sup of
        # {x : F(x) < level} then lies in cell i-1, which has positive density
        i = bisect.bisect_left(cum, level)
        x[j] = float(bps[i - 1] + (level - cum[i - 1]) / vals[i - 1])
    return _require_admissible(ParticleConfig(x), "equal-mass atomization")


def atomize_midpoint_shift(base: ParticleConfig, check: bool = True) -> ParticleConfig:
    """Move every odd-indexed vehicle j < N to the midpoint of its old cell on the left.

    Even indices and x_N are kept. With ``check`` the result is validated and an
    :class:`AdmissibilityError` is raised on violations; ``check=False`` returns
    the configuration as is so inadmissible cases can still be explored.
    """
    x = base.positions.copy()
    n = base.n
    odd = np.arange(1, n, 2)
    x[odd] = 0.5 * (base.positions[odd - 1] + base.positions[odd])
    config = ParticleConfig(x)
    if check:
        _require_admissible(config, "midpoint-shifted atomization")
    return config


def atomize(rho_bar: InitialDensity, n: int, scheme: str = "dfr", check: bool = True) -> ParticleConfig:
    """Dispatch on ``scheme`` in {"dfr", "midpoint"}."""
    base = atomize_dfr(rho_bar, n)
    if scheme == "dfr":
        return base
    if scheme == "midpoint":
        return atomize_midpoint_shift(base, check=check)
    raise ConfigError(f"unknown atomization scheme {scheme!r}")


def half_box() -> InitialDensity:
    """rho_bar = 1/2 on [1/2, 5/2]."""
    return InitialDensity.from_cells([0.5, 2.5], [0.5])


def two_level() -> InitialDensity:
    """rho_bar = 1 on [0, 1/2] and 1/3 on [1/2, 2]."""
    return InitialDensity.from_cells([0.0, 0.5, 2.0], [1.0, 1.0 / 3.0])


def unit_box() -> InitialDensity:
    """rho_bar = 1 on [0, 1]."""
    return InitialDensity.from_cells([0.0, 1.0], [1.0])


BUILTIN_DENSITIES = {
    "half_box": half_box,
    "two_level": two_level,
    "unit_box": unit_box,
}


def load_initial_density(source: str) -> InitialDensity:
    """Resolve a builtin name or read a ``breakpoint,value`` CSV file."""
    if source in BUILTIN_DENSITIES:
        return BUILTIN_DENSITIES[source]()
    path = Path(source)
    if not path.is_file():
        raise ConfigError(
            f"initial density {source!r} is neither a file nor one of {sorted(BUILTIN_DENSITIES)}"
        )
    return InitialDensity(PiecewiseConstantFn.from_csv(path, ROAD))
