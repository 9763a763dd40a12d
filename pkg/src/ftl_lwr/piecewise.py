"""Piecewise-constant and piecewise-linear functions with exact arithmetic.

Both types store their breakpoints exactly; integrals of differences are
computed on the merged breakpoint set, so no quadrature or grid projection
error enters any distance computed from them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

ROAD = "road"
MASS = "mass"


def _as_breakpoints(b) -> np.ndarray:
    b = np.array(b, dtype=float)
    if b.ndim != 1 or b.size < 2:
        raise ConfigError("need at least two breakpoints")
    if not np.all(np.isfinite(b)) or np.any(np.diff(b) <= 0):
        raise ConfigError("breakpoints must be finite and strictly ascending")
    return b


@dataclass(frozen=True, eq=False)
class PiecewiseConstantFn:
    """``values[j]`` on ``[breakpoints[j], breakpoints[j+1])``, zero elsewhere.

    ``domain`` is ``"road"`` for functions of position x and ``"mass"`` for
    functions of the Lagrangian mass coordinate z in [0, 1].
    """

    breakpoints: np.ndarray
    values: np.ndarray
    domain: str = ROAD

    def __post_init__(self):
        b = _as_breakpoints(self.breakpoints)
        v = np.array(self.values, dtype=float)
        if v.shape != (b.size - 1,):
            raise ConfigError(f"expected {b.size - 1} cell values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigError("cell values must be finite")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def n_cells(self) -> int:
        return self.values.size

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.n_cells)
        out = np.where(inside, self.values[np.clip(idx, 0, self.n_cells - 1)], 0.0)
        return out[()] if out.ndim == 0 else out

    def integral(self) -> float:
        return float(np.dot(self.values, self.widths))

    def support(self) -> tuple[float, float]:
        """Smallest closed interval outside which the function vanishes."""
        nz = np.flatnonzero(self.values)
        if nz.size == 0:
            raise ConfigError("function is identically zero")
        return float(self.breakpoints[nz[0]]), float(self.breakpoints[nz[-1] + 1])

    def integrate_over(self, a: float, b: float) -> float:
        """Exact integral over [a, b]."""
        lo = np.clip(self.breakpoints[:-1], a, b)
        hi = np.clip(self.breakpoints[1:], a, b)
        return float(np.dot(self.values, hi - lo))

    def cell_averages(self, edges) -> np.ndarray:
        """Exact averages over the cells of an arbitrary ascending edge array."""
        edges = np.asarray(edges, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.values * self.widths)])
        prim = np.interp(edges, self.breakpoints, cum, left=0.0, right=cum[-1])
        return np.diff(prim) / np.diff(edges)

    def map_values(self, fn) -> PiecewiseConstantFn:
        return PiecewiseConstantFn(self.breakpoints, fn(self.values), self.domain)

    def to_csv(self, path_or_file) -> None:
        """Write ``breakpoint,value`` rows; the terminal breakpoint carries value 0."""
        rows = [(b, v) for b, v in zip(self.breakpoints[:-1], self.values)]
        rows.append((self.breakpoints[-1], 0.0))
        _write_rows(path_or_file, ("breakpoint", "value"), rows)

    @classmethod
    def from_csv(cls, path, domain: str = ROAD) -> PiecewiseConstantFn:
        """Inverse of :meth:`to_csv`; the value on the last row is ignored."""
        bps, vals = [], []
        with open(path, newline="") as fh:
            for record in csv.reader(fh):
                if not record or record[0].strip().startswith("#"):
                    continue
                try:
                    b, v = float(record[0]), float(record[1])
                except (ValueError, IndexError):
                    if bps:
                        raise ConfigError(f"malformed density row {record!r} in {path}")
                    continue  # header
                bps.append(b)
                vals.append(v)
        if len(bps) < 2:
            raise ConfigError(f"density file {path} needs at least two rows")
        return cls(np.array(bps), np.array(vals[:-1]), domain)


@dataclass(frozen=True, eq=False)
class PiecewiseLinearFn:
    """A piecewise-linear function, possibly discontinuous at its breakpoints.

    On piece k, ``[breakpoints[k], breakpoints[k+1]]``, the function runs
    linearly from ``start[k]`` to ``end[k]``. Left of the first breakpoint it
    equals ``left``; right of the last one it equals ``right``. ``side`` fixes
    the value taken exactly at a breakpoint: ``"right"`` for right-continuous
    functions (cumulative distributions), ``"left"`` for left-continuous ones
    (pseudo-inverses). ``terminal``, when set, overrides the value at the last
    breakpoint itself.
    """

    breakpoints: np.ndarray
    start: np.ndarray
    end: np.ndarray
    left: float = 0.0
    right: float = 0.0
    side: str = "right"
    terminal: float | None = None

    def __post_init__(self):
        b = _as_breakpoints(self.breakpoints)
        s = np.array(self.start, dtype=float)
        e = np.array(self.end, dtype=float)
        if s.shape != (b.size - 1,) or e.shape != s.shape:
            raise ConfigError("start/end must hold one value per piece")
        if self.side not in ("left", "right"):
            raise ConfigError(f"side must be 'left' or 'right', got {self.side!r}")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "end", e)

    @classmethod
    def continuous(cls, breakpoints, nodes, left=None, right=None, side="right") -> PiecewiseLinearFn:
        """Continuous interpolant through ``(breakpoints, nodes)``."""
        nodes = np.asarray(nodes, dtype=float)
        return cls(
            breakpoints,
            nodes[:-1],
            nodes[1:],
            left=float(nodes[0] if left is None else left),
            right=float(nodes[-1] if right is None else right),
            side=side,
        )

    @property
    def slopes(self) -> np.ndarray:
        return (self.end - self.start) / np.diff(self.breakpoints)

    @property
    def nodes(self) -> np.ndarray:
        """Values at breakpoints, taken from the piece starting there (last: end value)."""
        return np.concatenate([self.start, self.end[-1:]])

    def is_continuous(self, atol: float = 0.0) -> bool:
        return bool(
            np.all(np.abs(self.end[:-1] - self.start[1:]) <= atol)
            and abs(self.start[0] - self.left) <= atol
            and abs(self.end[-1] - self.right) <= atol
        )

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        b = self.breakpoints
        # side="right": piece k is [b_k, b_{k+1}); side="left": (b_k, b_{k+1}]
        k = np.searchsorted(b, x, side=self.side) - 1
        kk = np.clip(k, 0, b.size - 2)
        frac = (x - b[kk]) / (b[kk + 1] - b[kk])
        val = self.start[kk] + frac * (self.end[kk] - self.start[kk])
        out = np.where(k < 0, self.left, np.where(k >= b.size - 1, self.right, val))
        if self.terminal is not None:
            out = np.where(x == b[-1], self.terminal, out)
        return out[()] if out.ndim == 0 else out

    def one_sided(self, a: np.ndarray, b: np.ndarray):
        """Values at the ends of sub-intervals [a_i, b_i] lying inside single pieces.

        Returns the limits from inside each sub-interval, which is what exact
        integration needs regardless of the ``side`` convention.
        """
        mid = 0.5 * (a + b)
        bp = self.breakpoints
        k = np.searchsorted(bp, mid, side="right") - 1
        before = k < 0
        after = k >= bp.size - 1
        kk = np.clip(k, 0, bp.size - 2)
        width = bp[kk + 1] - bp[kk]
        s, e = self.start[kk], self.end[kk]
        va = s + (a - bp[kk]) / width * (e - s)
        vb = s + (b - bp[kk]) / width * (e - s)
        va = np.where(before, self.left, np.where(after, self.right, va))
        vb = np.where(before, self.left, np.where(after, self.right, vb))
        return va, vb

    def to_csv(self, path_or_file, header=("x", "F")) -> None:
        """Write node values; a discontinuity appears as two rows at the same x."""
        rows = []
        for k in range(self.start.size):
            if not rows or rows[-1] != (self.breakpoints[k], self.start[k]):
                rows.append((self.breakpoints[k], self.start[k]))
            rows.append((self.breakpoints[k + 1], self.end[k]))
        _write_rows(path_or_file, header, rows)


def merged_breakpoints(*arrays) -> np.ndarray:
    return np.unique(np.concatenate([np.asarray(a, dtype=float) for a in arrays]))


def abs_linear_integral(d0, d1, h):
    """Exact integral of |d| for d linear from d0 to d1 over a length h.

    Sign changes are split at the root, so the result is exact.
    """
    d0 = np.asarray(d0, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    a0, a1 = np.abs(d0), np.abs(d1)
    same = d0 * d1 >= 0
    denom = np.where(same, 1.0, a0 + a1)
    crossing = (d0**2 + d1**2) / (2.0 * denom)
    return np.where(same, 0.5 * (a0 + a1), crossing) * h


def l1_distance_linear(f: PiecewiseLinearFn, g: PiecewiseLinearFn, interval=None) -> float:
    """Exact ``integral |f - g|`` over the real line or over ``interval = (lo, hi)``.

    Over the real line, raises if the two functions differ outside their
    combined breakpoint range, where the integral would diverge.
    """
    grid = merged_breakpoints(f.breakpoints, g.breakpoints)
    if interval is not None:
        lo, hi = map(float, interval)
        if not hi > lo:
            raise ConfigError(f"empty integration interval {interval!r}")
        grid = merged_breakpoints(grid[(grid > lo) & (grid < hi)], [lo, hi])
    elif f.left != g.left or f.right != g.right:
        raise ConfigError("functions differ at infinity; L1 distance diverges")
    a, b = grid[:-1], grid[1:]
    fa, fb = f.one_sided(a, b)
    ga, gb = g.one_sided(a, b)
    return float(np.sum(abs_linear_integral(fa - ga, fb - gb, b - a)))


def l1_norm_linear(f: PiecewiseLinearFn) -> float:
    """Exact ``integral |f|``; ``f`` must vanish at infinity."""
    if f.left != 0 or f.right != 0:
        raise ConfigError("function does not vanish at infinity")
    return float(np.sum(abs_linear_integral(f.start, f.end, np.diff(f.breakpoints))))


def _write_rows(path_or_file, header, rows) -> None:
    if hasattr(path_or_file, "write"):
        writer = csv.writer(path_or_file)
        writer.writerow(header)
        writer.writerows((repr(float(a)), repr(float(b))) for a, b in rows)
        return
    with open(path_or_file, "w", newline="") as fh:
        _write_rows(fh, header, rows)
