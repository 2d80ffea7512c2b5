"""Paths on a uniform time grid, read as piecewise-linear functions.

A ``GridPath`` stores node values ``values[k]`` at times ``k * dt``.  Between
nodes the path is the linear interpolant; total variation, time-change
inverses and resampling all use that reading.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError

_GRID_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class GridPath:
    dt: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 2:
            raise InputError("a grid path needs at least two nodes (N >= 1)")
        if not self.dt > 0:
            raise InputError("dt must be positive", field="dt")
        if not np.all(np.isfinite(values)):
            raise InputError("path values must be finite")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "values", values)

    @property
    def n_steps(self):
        return self.values.shape[0] - 1

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def horizon(self):
        return self.n_steps * self.dt

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    def increments(self):
        return np.diff(self.values, axis=0)

    def at(self, t):
        """Linear interpolation at time(s) t inside [0, horizon]."""
        t = np.asarray(t, dtype=float)
        pos = np.clip(t / self.dt, 0.0, self.n_steps)
        k = np.minimum(np.floor(pos).astype(int), self.n_steps - 1)
        frac = (pos - k)[..., None]
        return (1.0 - frac) * self.values[k] + frac * self.values[k + 1]

    def resample(self, step, horizon=None):
        """Values of the piecewise-linear path on the grid ``k * step``."""
        horizon = self.horizon if horizon is None else horizon
        n = grid_count(horizon, step)
        if n * step > self.horizon * (1 + _GRID_RTOL):
            raise InputError("resampling horizon exceeds the path horizon")
        ratio = self.dt / step
        if abs(ratio - round(ratio)) < _GRID_RTOL and round(ratio) >= 1:
            # refinement by an integer factor: interpolate slab by slab
            r = int(round(ratio))
            frac = np.arange(r) / r
            base = self.values[:-1, None, :] + frac[None, :, None] * self.increments()[:, None, :]
            vals = np.concatenate([base.reshape(-1, self.dim), self.values[-1:]])
            return GridPath(step, vals[: n + 1])
        return GridPath(step, self.at(step * np.arange(n + 1)))

    def truncate(self, T):
        return GridPath(self.dt, self.values[: node_index(self, T) + 1])

    def norms(self):
        return np.linalg.norm(self.values, axis=1)


class IncreasingGridFunction(GridPath):
    """Scalar nondecreasing grid function with kappa(0) = 0."""

    def __post_init__(self):
        super().__post_init__()
        if self.dim != 1:
            raise InputError("an increasing grid function is scalar")
        v = self.values[:, 0]
        if v[0] != 0.0:
            raise InputError("kappa(0) must be 0")
        if np.any(np.diff(v) < 0):
            raise InputError("kappa must be nondecreasing")


def grid_count(horizon, step):
    """Number of steps of size ``step`` in ``horizon``; must be an integer."""
    n = horizon / step
    if abs(n - round(n)) > _GRID_RTOL * max(1.0, n) or round(n) < 1:
        raise InputError(f"step {step} does not divide horizon {horizon}", field="step")
    return int(round(n))


def node_index(p, t):
    if t < 0 or t > p.horizon * (1 + _GRID_RTOL):
        raise InputError(f"time {t} outside [0, {p.horizon}]", field="t")
    k = t / p.dt
    if abs(k - round(k)) > _GRID_RTOL * max(1.0, k):
        raise InputError(f"time {t} is not a grid node", field="t")
    return min(int(round(k)), p.n_steps)


def _same_grid(f, g):
    if f.values.shape != g.values.shape or abs(f.dt - g.dt) > _GRID_RTOL * f.dt:
        raise InputError("paths live on different grids")


def total_variation(p, t=None):
    """Total variation of the piecewise-linear path on [0, t]."""
    t = p.horizon if t is None else float(t)
    if t < 0 or t > p.horizon * (1 + _GRID_RTOL):
        raise InputError(f"time {t} outside [0, {p.horizon}]", field="t")
    steps = np.linalg.norm(p.increments(), axis=1)
    pos = min(t / p.dt, p.n_steps)
    k = int(np.floor(pos + _GRID_RTOL))
    k = min(k, p.n_steps)
    tv = float(steps[:k].sum())
    frac = pos - k
    if k < p.n_steps and frac > 0:
        tv += frac * float(steps[k])
    return tv


def running_variation(p):
    """|p|_t at every node."""
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(p.increments(), axis=1))])


def metric_d(f, g, horizon=10.0):
    """int_0^H |f-g|/(1+|f-g|) e^{-t} dt by the trapezoid rule.

    H is capped at the path horizon; the neglected tail is at most e^{-H}.
    """
    _same_grid(f, g)
    if not horizon > 0:
        raise InputError("horizon must be positive", field="horizon")
    k = int(np.floor(min(horizon, f.horizon) / f.dt + _GRID_RTOL))
    k = min(k, f.n_steps)
    diff = np.linalg.norm(f.values[: k + 1] - g.values[: k + 1], axis=1)
    integrand = diff / (1.0 + diff) * np.exp(-f.times[: k + 1])
    return float(np.trapezoid(integrand, dx=f.dt))


def sup_distance(f, g, T=None):
    """max over grid nodes t_k <= T of |f(t_k) - g(t_k)|."""
    _same_grid(f, g)
    k = f.n_steps if T is None else node_index(f, T)
    return float(np.linalg.norm(f.values[: k + 1] - g.values[: k + 1], axis=1).max())


def inverse_time_change(kappa, t):
    """inf{s : kappa(s) > t} for the piecewise-linear extension of kappa.

    Returns the final grid time when kappa never exceeds t.
    """
    v = kappa.values[:, 0]
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InputError("t must be >= 0", field="t")
    # first node strictly above t
    k = np.searchsorted(v, t_arr, side="right")
    out = np.full(t_arr.shape, kappa.horizon)
    inside = k <= kappa.n_steps
    kk = np.where(inside, k, 1)
    lo, hi = v[kk - 1], v[kk]
    frac = (t_arr - lo) / np.where(hi > lo, hi - lo, 1.0)
    out = np.where(inside, (kk - 1 + frac) * kappa.dt, out)
    return float(out) if out.ndim == 0 else out


# -- serialization --------------------------------------------------------


def write_csv(path, p, comments=()):
    """CSV with header ``t,x1..xm``; optional leading ``# key=value`` lines."""
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(p.dim)])
        for t, row in zip(p.times, p.values):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t":
        raise InputError(f"{path}: first column must be 't'")
    data = np.array(body, dtype=float)
    times = data[:, 0]
    dt = float(times[1] - times[0])
    if not np.allclose(np.diff(times), dt, rtol=1e-9, atol=0):
        raise InputError(f"{path}: time column is not a uniform grid")
    return GridPath(dt, data[:, 1:])


def save_columnar(path, p, **meta):
    """Binary columnar dump (.npz): arrays ``t``, ``x1``..``xm`` and ``dt``."""
    cols = {f"x{i + 1}": p.values[:, i] for i in range(p.dim)}
    extra = {f"meta_{k}": np.asarray(v) for k, v in meta.items()}
    np.savez(path, t=p.times, dt=np.asarray(p.dt), **cols, **extra)


def load_columnar(path):
    with np.load(path) as data:
        m = sum(1 for k in data.files if k.startswith("x"))
        values = np.column_stack([data[f"x{i + 1}"] for i in range(m)])
        return GridPath(float(data["dt"]), values)
