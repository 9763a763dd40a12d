"""Studies that run particle systems against each other or against the reference solver.

Each study maps a :class:`StudyConfig` to a :class:`StudyReport` of
``(n, t, metric, value)`` rows. Work fans out over N to a process pool whose
size is capped by the ``FTL_LWR_THREADS`` environment variable; rows are
merged in N order, so reports do not depend on scheduling. Aggregate rows
(fitted slopes) use ``n = 0``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from .atomize import ParticleConfig, atomize, load_initial_density, validate_config
from .density import eulerian_density
from .dynamics import IntegratorSettings, integrate
from .errors import ConfigError, ConsistencyError, NumericalError
from .lwr import solve_lwr
from .metrics import lp_distance, stability_rhs, total_variation, w1_distance
from .velocity import parse_velocity

CONVERGENCE = "convergence"
RATE_T0 = "rate_t0"
STABILITY = "stability"
REMARK49 = "remark49"
STUDIES = (CONVERGENCE, RATE_T0, STABILITY, REMARK49)

AGGREGATE_N = 0
ROUNDING_FLOOR = 1e-12
_CONFIG_KEYS = {"study", "velocity", "rho_bar", "n_list", "t_end", "output_times", "tolerances", "out", "format"}
_EXTRA_KEYS = {"scheme", "reference_dx", "cfl", "method", "seed"}


@dataclass(frozen=True)
class StudyConfig:
    study: str
    velocity: str = "greenshields"
    rho_bar: str = "half_box"
    n_list: tuple = (25, 100, 400)
    t_end: float = 1.0
    output_times: tuple | None = None
    tolerances: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "csv"
    scheme: str = "dfr"
    reference_dx: float | None = None
    cfl: float = 0.45
    method: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; choose from {STUDIES}")
        ns = tuple(int(n) for n in self.n_list)
        if not ns or any(n < 1 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n_list must be a non-empty, strictly ascending list of positive integers")
        object.__setattr__(self, "n_list", ns)
        if self.study != RATE_T0 and not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.output_times is not None:
            ts = tuple(float(t) for t in self.output_times)
            if not ts or any(b <= a for a, b in zip(ts, ts[1:])) or ts[0] < 0 or ts[-1] > self.t_end:
                raise ConfigError("output_times must ascend strictly within [0, t_end]")
            object.__setattr__(self, "output_times", ts)
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        unknown = set(self.tolerances) - {"abs_tol", "rel_tol"}
        if unknown:
            raise ConfigError(f"unknown tolerance keys {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict) -> StudyConfig:
        unknown = set(data) - _CONFIG_KEYS - _EXTRA_KEYS
        if unknown:
            raise ConfigError(f"unknown study config keys {sorted(unknown)}")
        if "study" not in data:
            raise ConfigError("study config needs a 'study' key")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> StudyConfig:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read study config {path}: {exc}") from None
        return cls.from_dict(data)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.output_times if self.output_times is not None else (self.t_end,))

    def integrator_settings(self) -> IntegratorSettings:
        kwargs = dict(self.tolerances)
        if self.method:
            kwargs["method"] = self.method
        return IntegratorSettings(**kwargs)


@dataclass(frozen=True)
class Row:
    n: int
    t: float
    metric: str
    value: float


@dataclass
class StudyReport:
    rows: list
    provenance: dict

    def __post_init__(self):
        keys = [(r.n, r.t, r.metric) for r in self.rows]
        if len(set(keys)) != len(keys):
            raise ConsistencyError("duplicate (n, t, metric) rows in study report")

    def select(self, metric: str, n: int | None = None) -> list[Row]:
        return [r for r in self.rows if r.metric == metric and (n is None or r.n == n)]

    def value(self, metric: str, n: int, t: float) -> float:
        for r in self.rows:
            if r.metric == metric and r.n == n and r.t == t:
                return r.value
        raise KeyError((metric, n, t))

    def write(self, path, fmt: str = "csv") -> None:
        with open(path, "w", newline="") as fh:
            if fmt == "json":
                json.dump({"provenance": self.provenance, "rows": [asdict(r) for r in self.rows]}, fh, indent=2)
                fh.write("\n")
                return
            for key, val in self.provenance.items():
                fh.write(f"# {key}: {json.dumps(val)}\n")
            writer = csv.writer(fh)
            writer.writerow(("n", "t", "metric", "value"))
            writer.writerows((r.n, repr(r.t), r.metric, repr(r.value)) for r in self.rows)


def worker_count(tasks: int) -> int:
    raw = os.environ.get("FTL_LWR_THREADS")
    try:
        cap = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"FTL_LWR_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(cap, tasks))


def _fan_out(fn, args_list):
    workers = worker_count(len(args_list))
    if workers == 1:
        return [fn(*args) for args in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args_list)))


def _package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _report(cfg: StudyConfig, rows, started: float, extra: dict | None = None) -> StudyReport:
    provenance = {
        "config": asdict(cfg),
        "version": _package_version(),
        "wall_time_s": round(time.perf_counter() - started, 3),
        "seed": cfg.seed,
    }
    provenance.update(extra or {})
    return StudyReport(rows, provenance)


def invariants_ok(config: ParticleConfig, x_span0: float, t: float, v_max: float) -> bool:
    """Mass, ordering and both sides of the discrete maximum principle."""
    rho = eulerian_density(config)
    gaps = config.gaps
    return bool(
        abs(rho.integral() - 1.0) <= 1e-12
        and np.all(gaps >= config.l * (1 - 1e-8))
        and gaps.max() <= x_span0 + t * v_max + 1e-8
        and config.densities.max() <= 1 + 1e-8
    )


def loglog_slope(ns, values, floor: float = ROUNDING_FLOOR) -> float:
    """Least-squares slope of log(value) against log(n).

    Values at or below ``floor`` are rounding residue of exact zeros and are
    left out; with fewer than two values left the slope is nan.
    """
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > floor
    if np.count_nonzero(keep) < 2:
        return math.nan
    return float(np.polyfit(np.log(ns[keep]), np.log(values[keep]), 1)[0])


# -- convergence -----------------------------------------------------------------


def reference_dx(cfg: StudyConfig, support_length: float) -> float:
    return cfg.reference_dx or min(1e-3, support_length / 2000.0)


def _convergence_rows(cfg: StudyConfig, n: int, reference) -> list[Row]:
    model = parse_velocity(cfg.velocity)
    rho_bar = load_initial_density(cfg.rho_bar)
    config0 = atomize(rho_bar, n, cfg.scheme, check=False)
    admissible = not validate_config(config0)
    rows = [
        Row(n, 0.0, "tv_initial", total_variation(eulerian_density(config0))),
        Row(n, 0.0, "admissible_initial", float(admissible)),
    ]
    try:
        traj = integrate(config0, model, cfg.t_end, cfg.integrator_settings(), cfg.times, check=False)
    except NumericalError:
        return rows + [Row(n, cfg.t_end, "failed", 1.0)]
    span0 = config0.positions[-1] - config0.positions[0]
    for t, snap, ref in zip(traj.times, traj.states, reference):
        rho = eulerian_density(snap)
        rows.append(Row(n, float(t), "l1_error", lp_distance(rho, ref)))
        rows.append(Row(n, float(t), "w1_error", w1_distance(rho, ref)))
        rows.append(Row(n, float(t), "invariants_ok", float(invariants_ok(snap, span0, t, model.v_max))))
    return rows


def run_convergence_study(cfg: StudyConfig) -> StudyReport:
    """Compare rho^{E,N}(t) with a fine Godunov solution for every N, in L1 and W1."""
    started = time.perf_counter()
    model = parse_velocity(cfg.velocity)
    rho_bar = load_initial_density(cfg.rho_bar)
    lo, hi = rho_bar.support
    dx = reference_dx(cfg, hi - lo)
    solution = solve_lwr(rho_bar, model, cfg.t_end, dx, cfg.cfl, output_times=cfg.times)
    reference = [snap.to_piecewise() for snap in solution.snapshots]
    per_n = _fan_out(_convergence_rows, [(cfg, n, reference) for n in cfg.n_list])
    rows = [r for chunk in per_n for r in chunk]
    extra = {
        "reference_dx": dx,
        "reference_tvd_ok": solution.stats.tvd_ok,
        "reference_max_principle_ok": solution.stats.max_principle_ok,
    }
    return _report(cfg, rows, started, extra)


# -- rates at t = 0 ----------------------------------------------------------------


def run_rate_study_t0(cfg: StudyConfig) -> StudyReport:
    """W1 and L1 distances between rho^{E,N}(0) and rho_bar, with fitted log-log slopes.

    ``w1_bound`` records 2 (x_max - x_min) / N, the bound on W1 for the
    equal-mass scheme.
    """
    started = time.perf_counter()
    if cfg.scheme != "dfr":
        raise ConfigError("the rate study applies to the equal-mass scheme only")
    rho_bar = load_initial_density(cfg.rho_bar)
    span = rho_bar.x_max - rho_bar.x_min
    rows = []
    w1s, l1s = [], []
    for n in cfg.n_list:
        rho = eulerian_density(atomize(rho_bar, n, "dfr"))
        w1s.append(w1_distance(rho, rho_bar))
        l1s.append(lp_distance(rho, rho_bar))
        rows += [
            Row(n, 0.0, "w1_error", w1s[-1]),
            Row(n, 0.0, "w1_bound", 2.0 * span / n),
            Row(n, 0.0, "l1_error", l1s[-1]),
        ]
    rows.append(Row(AGGREGATE_N, 0.0, "w1_slope", loglog_slope(cfg.n_list, w1s)))
    rows.append(Row(AGGREGATE_N, 0.0, "l1_slope", loglog_slope(cfg.n_list, l1s)))
    return _report(cfg, rows, started)


# -- stability ------------------------------------------------------------------------


def _stability_rows(cfg: StudyConfig, n: int) -> list[Row]:
    model = parse_velocity(cfg.velocity)
    rho_bar = load_initial_density(cfg.rho_bar)
    a0 = atomize(rho_bar, n, "dfr")
    # the midpoint scheme may break gap >= l when sup rho_bar > 1/2; run it anyway and say so
    b0 = atomize(rho_bar, n, "midpoint", check=False)
    admissible = Row(n, 0.0, "admissible_initial", float(not validate_config(b0)))
    settings = cfg.integrator_settings()
    try:
        ta = integrate(a0, model, cfg.t_end, settings, cfg.times)
        tb = integrate(b0, model, cfg.t_end, settings, cfg.times, check=False)
    except NumericalError:
        return [admissible, Row(n, cfg.t_end, "failed", 1.0)]
    rows = [admissible, Row(n, 0.0, "w1_bound", stability_rhs(a0, b0, model.lipschitz_L, cfg.t_end))]
    w1_sup = 0.0
    for t, a, b in zip(ta.times, ta.states, tb.states):
        ra, rb = eulerian_density(a), eulerian_density(b)
        w1 = w1_distance(ra, rb)
        w1_sup = max(w1_sup, w1)
        rows.append(Row(n, float(t), "w1_distance", w1))
        rows.append(Row(n, float(t), "l1_distance", lp_distance(ra, rb)))
        rows.append(Row(n, float(t), "y_l1_distance", float(np.sum(np.abs(a.inverse_densities - b.inverse_densities)))))
    rows.append(Row(n, float(cfg.t_end), "w1_sup", w1_sup))
    return rows


def run_stability_study(cfg: StudyConfig) -> StudyReport:
    """Evolve the equal-mass and midpoint atomizations of one rho_bar side by side.

    ``w1_bound`` is W1 at t = 0 plus 2 L T times the l1 distance of the
    initial gap sequences; ``w1_sup`` the largest W1 seen on the output grid.
    """
    started = time.perf_counter()
    per_n = _fan_out(_stability_rows, [(cfg, n) for n in cfg.n_list])
    return _report(cfg, [r for chunk in per_n for r in chunk], started)


def remark49_config(out: str | None = None, fmt: str = "csv", full: bool = False, **overrides) -> StudyConfig:
    """Bonzani-Mussone law, rho_bar = 1/2 on [1/2, 5/2], T = 3, snapshots every 0.1."""
    base = StudyConfig(
        study=REMARK49,
        velocity="bonzani",
        rho_bar="half_box",
        n_list=(5, 20, 100, 500) if full else (5, 20, 100),
        t_end=3.0,
        output_times=tuple(np.round(np.linspace(0.0, 3.0, 31), 12)),
        out=out,
        format=fmt,
    )
    return replace(base, **overrides) if overrides else base


def run_remark49(cfg: StudyConfig) -> StudyReport:
    """The stability study on the remark's parameter set; no pass/fail is attached."""
    report = run_stability_study(cfg)
    report.provenance["note"] = "L1 decay of the midpoint scheme is reported, not asserted"
    return report


RUNNERS = {
    CONVERGENCE: run_convergence_study,
    RATE_T0: run_rate_study_t0,
    STABILITY: run_stability_study,
    REMARK49: run_remark49,
}


def run_study(cfg: StudyConfig) -> StudyReport:
    report = RUNNERS[cfg.study](cfg)
    if cfg.out:
        report.write(cfg.out, cfg.format)
    return report
