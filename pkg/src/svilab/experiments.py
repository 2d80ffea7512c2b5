"""Monte Carlo studies of the Wong-Zakai limit and the small-noise estimates.

Every study splits its trials into fixed-size blocks.  Each block draws from
its own random stream, derived from ``(seed, tag, block or trial index)``, so
results do not depend on how blocks are scheduled across workers.  Blocks
are reduced in index order.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dvi, monotone, svi
from .coefficients import Coefficient
from .errors import InputError, NumericalError
from .paths import GridPath, grid_count

SCHEMA_VERSION = 1
MIN_POWERED = 50
Z95 = 1.96

_TAG_TRIAL, _TAG_CONTINUITY, _TAG_SMALL_BALL, _TAG_LEVY = 0, 1, 2, 3


# -- reporting ------------------------------------------------------------


def binomial_half_width(p_hat, n):
    """Normal-approximation 95% half-width; rule of three when the cell is degenerate."""
    if n <= 0:
        return float("inf")
    if p_hat <= 0.0 or p_hat >= 1.0:
        return 3.0 / n
    return Z95 * float(np.sqrt(p_hat * (1.0 - p_hat) / n))


def median_with_half_width(values):
    """Median and half-width of the distribution-free 95% order-statistic interval."""
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    if n == 0:
        return float("nan"), float("inf")
    spread = Z95 * np.sqrt(n) / 2.0
    lo = int(np.clip(np.floor(n / 2.0 - spread), 0, n - 1))
    hi = int(np.clip(np.ceil(n / 2.0 + spread), 0, n - 1))
    return float(np.median(v)), 0.5 * float(v[hi] - v[lo])


@dataclass
class Cell:
    key: dict
    estimate: float
    trials: int
    half_width: float
    underpowered: bool = False
    extra: dict = field(default_factory=dict)


def proportion_cell(key, hits, n, **extra):
    if n == 0:
        return Cell(key, float("nan"), 0, float("inf"), True, dict(extra, hits=0))
    p_hat = hits / n
    return Cell(key, p_hat, int(n), binomial_half_width(p_hat, n), n < MIN_POWERED,
                dict(extra, hits=int(hits)))


@dataclass
class ExperimentReport:
    name: str
    parameters: dict
    seed: int
    cells: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def cell(self, **key):
        for c in self.cells:
            if all(c.key.get(k) == v for k, v in key.items()):
                return c
        raise KeyError(key)

    def to_dict(self, wall_clock=True):
        out = {
            "schema_version": self.schema_version,
            "name": self.name,
            "seed": self.seed,
            "parameters": self.parameters,
            "cells": [asdict(c) for c in self.cells],
            "summary": self.summary,
            "series": self.series,
        }
        if wall_clock:
            out["wall_clock"] = self.wall_clock
        return _jsonable(out)

    def to_json(self, wall_clock=True, **extra):
        data = self.to_dict(wall_clock)
        data.update(_jsonable(extra))
        return json.dumps(data, sort_keys=True, indent=1, allow_nan=True)

    def to_csv(self, **extra):
        buf = io.StringIO()
        key_names = sorted({k for c in self.cells for k in c.key})
        writer = csv.writer(buf, lineterminator="\n")
        meta = dict(extra, seed=self.seed, schema_version=self.schema_version)
        for k in sorted(meta):
            buf.write(f"# {k}={meta[k]}\n")
        writer.writerow(["study"] + key_names + ["estimate", "half_width", "trials", "underpowered", "extra"])
        for c in self.cells:
            writer.writerow(
                [self.name] + [c.key.get(k, "") for k in key_names]
                + [repr(float(c.estimate)), repr(float(c.half_width)), c.trials, c.underpowered,
                   json.dumps(_jsonable(c.extra), sort_keys=True)]
            )
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def nonincreasing_within(estimates, half_widths):
    """True when each estimate exceeds its predecessor by at most one half-width."""
    return all(
        later <= earlier + max(hw_a, hw_b)
        for earlier, later, hw_a, hw_b in zip(estimates, estimates[1:], half_widths, half_widths[1:])
    )


def linear_fit(x, y):
    """Least-squares line y = slope x + intercept, with R^2."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2:
        return {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan"), "points": int(x.size)}
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2, "points": int(x.size)}


# -- execution ------------------------------------------------------------


def run_tasks(fn, tasks, workers=1):
    """Ordered map; worker count never changes the results."""
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _blocks(n, size):
    return [(start, min(start + size, n)) for start in range(0, n, size)]


def _trial_paths(seed, start, stop, n_steps, d, dt):
    """Driver node arrays (B, n_steps+1, d), one independent stream per trial."""
    inc = np.stack([
        svi.brownian_increments(svi.make_rng(seed, _TAG_TRIAL, i), 1, n_steps, d, dt)[0]
        for i in range(start, stop)
    ])
    return svi.paths_from_increments(inc)


def reflection_series(eps, T=1.0, terms=None):
    """P(sup_{t<=T} |w_t| < eps) for 1-D Brownian motion (reflection-principle series)."""
    if terms is None:
        # exponent reaches ~800 at the last term
        terms = 200 + int(10 * eps / np.sqrt(T))
    k = np.arange(terms)
    return float(np.sum(4.0 / np.pi * (-1.0) ** k / (2 * k + 1)
                        * np.exp(-((2 * k + 1) ** 2) * np.pi**2 * T / (8.0 * eps**2))))


# -- limit theorem / direct support inclusion --------------------------------


def _check_study(p, levels, N_fine, trials):
    if trials < 1:
        raise InputError("trials must be >= 1", field="trials")
    if not levels:
        raise InputError("levels must be nonempty", field="levels")
    if max(levels) > N_fine or min(levels) < 0:
        raise InputError("levels must lie in [0, N_fine]", field="levels")
    return svi.check_level(N_fine, p.T)


def _limit_block(p, levels, N_fine, seed, start, stop):
    n_steps = grid_count(p.T, 2.0**-N_fine)
    w = _trial_paths(seed, start, stop, n_steps, p.d, 2.0**-N_fine)
    errors = np.full((stop - start, len(levels)), np.nan)
    try:
        X_ref, K_ref, _ = svi.wong_zakai_batch(p, w, N_fine, N_fine)
        for j, n in enumerate(levels):
            X_n, K_n, _ = svi.wong_zakai_batch(p, w, N_fine, n)
            errors[:, j] = _pair_distance(X_n, K_n, X_ref, K_ref)
    except NumericalError:
        pass
    return errors


def _pair_distance(X, K, X_ref, K_ref):
    return np.linalg.norm(X - X_ref, axis=-1).max(axis=0) + np.linalg.norm(K - K_ref, axis=-1).max(axis=0)


def _support_block(p, levels, N_fine, seed, start, stop):
    dt = 2.0**-N_fine
    n_steps = grid_count(p.T, dt)
    w = _trial_paths(seed, start, stop, n_steps, p.d, dt)
    x0 = np.broadcast_to(p.x, (stop - start, p.m))
    dist = np.full((stop - start, len(levels)), np.nan)
    try:
        dh_ref = np.moveaxis(np.diff(w, axis=-2), -2, 0)
        X_ref, K_ref = dvi.skeleton_batch(p.spec, p.b, p.sigma, x0, dh_ref, dt)
        for j, n in enumerate(levels):
            # skeleton driven by the piecewise-linear control h = w_n
            dh = svi.dyadic_increments(w, N_fine, n, dt)
            xi, eta = dvi.skeleton_batch(p.spec, p.b, p.sigma, x0, np.moveaxis(dh, -2, 0), dt)
            dist[:, j] = _pair_distance(xi, eta, X_ref, K_ref)
    except NumericalError:
        pass
    return dist


def _per_level_cells(levels, errors, eps):
    """Exceedance-probability cells, or median cells when eps is None."""
    cells = []
    for j, n in enumerate(levels):
        col = errors[:, j]
        ok = col[np.isfinite(col)]
        med, med_hw = median_with_half_width(ok)
        if eps is None:
            cells.append(Cell({"level": int(n)}, med, int(ok.size), med_hw, ok.size < MIN_POWERED,
                              {"statistic": "median"}))
        else:
            cells.append(proportion_cell({"level": int(n)}, int(np.sum(ok > eps)), ok.size,
                                         median_error=med, median_half_width=med_hw))
    return cells


def limit_theorem_study(p, levels, N_fine, eps, trials, seed, workers=1, block=25):
    """P(sup|X_n - X| + sup|K_n - K| > eps) per level n against the finest-level reference."""
    t0 = time.perf_counter()
    levels = [int(n) for n in levels]
    _check_study(p, levels, N_fine, trials)
    if not eps > 0:
        raise InputError("eps must be positive", field="eps")
    tasks = [(p, levels, N_fine, seed, a, b) for a, b in _blocks(trials, block)]
    errors = np.concatenate(run_tasks(_limit_block, tasks, workers))
    failed = int(np.sum(~np.all(np.isfinite(errors), axis=1)))
    cells = _per_level_cells(levels, errors, eps)
    est = [c.estimate for c in cells]
    hws = [c.half_width for c in cells]
    meds = [c.extra["median_error"] for c in cells]
    summary = {
        "failed_trials": failed,
        "probability_nonincreasing": nonincreasing_within(est, hws),
        "median_errors": meds,
        "median_ratio_last_first": meds[-1] / meds[0] if meds[0] > 0 else 0.0,
    }
    params = {"levels": levels, "N_fine": N_fine, "eps": eps, "trials": trials, "problem": problem_to_dict(p)}
    return ExperimentReport("limit_theorem", params, int(seed), cells, summary,
                            {"errors": errors.tolist()}, time.perf_counter() - t0)


def support_direct_study(p, levels, N_fine, trials, seed, workers=1, block=25):
    """Distance from the reference (X, K) to the skeleton pair (xi(w_n, x), eta(w_n, x))."""
    t0 = time.perf_counter()
    levels = [int(n) for n in levels]
    _check_study(p, levels, N_fine, trials)
    tasks = [(p, levels, N_fine, seed, a, b) for a, b in _blocks(trials, block)]
    dist = np.concatenate(run_tasks(_support_block, tasks, workers))
    cells = _per_level_cells(levels, dist, None)
    summary = {
        "failed_trials": int(np.sum(~np.all(np.isfinite(dist), axis=1))),
        "median_distances": [c.estimate for c in cells],
    }
    params = {"levels": levels, "N_fine": N_fine, "trials": trials, "problem": problem_to_dict(p)}
    return ExperimentReport("support_direct", params, int(seed), cells, summary,
                            {"distances": dist.tolist()}, time.perf_counter() - t0)


# -- conditioning by rejection -------------------------------------------------


def _draw_block(seed, tag, index, size, n_steps, d, dt, h_values, keep_below):
    rng = svi.make_rng(seed, tag, index)
    w = svi.paths_from_increments(svi.brownian_increments(rng, size, n_steps, d, dt))
    dist = np.linalg.norm(w - h_values, axis=-1).max(axis=-1)
    keep = np.flatnonzero(dist < keep_below)
    return dist, keep, w[keep]


def rejection_sample(deltas, trials_target, max_draws, seed, tag, n_steps, d, dt, h_values=0.0,
                     workers=1, block=2000):
    """Shared-stream rejection sampler for the events sup_k |w_k - h_k| < delta.

    Draws are consumed block by block in index order; every delta takes the
    first ``trials_target`` accepted draws.  Returns per-delta accepted paths
    and counters.
    """
    deltas = [float(x) for x in deltas]
    if trials_target < 1:
        raise InputError("trials_target must be >= 1", field="trials_target")
    if max_draws < 1:
        raise InputError("max_draws must be >= 1", field="max_draws")
    top = max(deltas)
    accepted = {delta: [] for delta in deltas}
    hits = {delta: 0 for delta in deltas}
    draws = 0
    n_blocks = -(-max_draws // block)
    wave = max(1, workers or 1)
    b = 0
    while b < n_blocks and any(len(accepted[x]) < trials_target for x in deltas):
        batch = range(b, min(b + wave, n_blocks))
        tasks = [(seed, tag, i, min(block, max_draws - i * block), n_steps, d, dt, h_values, top) for i in batch]
        for dist, keep, kept in run_tasks(_draw_block, tasks, workers):
            if not any(len(accepted[x]) < trials_target for x in deltas):
                break
            draws += dist.size
            for delta in deltas:
                hits[delta] += int(np.sum(dist < delta))
                room = trials_target - len(accepted[delta])
                if room > 0:
                    sel = kept[dist[keep] < delta][:room]
                    accepted[delta].extend(sel)
        b += wave
    return accepted, hits, draws


def _solve_accepted(p, paths, level, workers, block=25):
    if len(paths) == 0:
        empty = np.empty((grid_count(p.T, 2.0**-level) + 1, 0, p.m))
        return empty, empty.copy()
    w = np.stack(paths)
    tasks = [(p, w[a:b], level) for a, b in _blocks(len(w), block)]
    out = run_tasks(_reference_chunk, tasks, workers)
    X = np.concatenate([o[0] for o in out], axis=1)
    K = np.concatenate([o[1] for o in out], axis=1)
    return X, K


def _reference_chunk(p, w, level):
    X, K, _ = svi.wong_zakai_batch(p, w, level, level)
    return X, K


def approx_continuity_study(p, h=None, eps=0.2, deltas=(0.8, 0.6, 0.45), max_draws=200_000,
                            trials_target=200, seed=0, level=10, workers=1):
    """P(sup|X - xi(h,x)| + sup|K - eta(h,x)| < eps  given  sup|w - h| < delta)."""
    t0 = time.perf_counter()
    deltas = [float(x) for x in deltas]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise InputError("deltas must be strictly decreasing", field="deltas")
    dt = 2.0**-level
    n_steps = svi.check_level(level, p.T)
    if h is None:
        h = GridPath(dt, np.zeros((n_steps + 1, p.d)))
    h = h.resample(dt, p.T)
    xi, eta = dvi.skeleton(dvi.SkeletonInput(p.spec, h, p.x, p.b, p.sigma), dt)
    accepted, hits, draws = rejection_sample(deltas, trials_target, max_draws, seed, _TAG_CONTINUITY,
                                             n_steps, p.d, dt, h.values, workers)
    cells = []
    for delta in deltas:
        X, K = _solve_accepted(p, accepted[delta], level, workers)
        sup_err = (np.linalg.norm(X - xi.values[:, None], axis=-1).max(axis=0)
                   + np.linalg.norm(K - eta.values[:, None], axis=-1).max(axis=0))
        tv_err = (np.linalg.norm(X - xi.values[:, None], axis=-1).max(axis=0)
                  + np.linalg.norm(np.diff(K - eta.values[:, None], axis=0), axis=-1).sum(axis=0))
        n_acc = sup_err.size
        cell = proportion_cell({"delta": delta}, int(np.sum(sup_err < eps)), n_acc,
                               acceptance_rate=hits[delta] / draws if draws else 0.0, raw_draws=draws,
                               accepted_total=hits[delta],
                               tv_variant_estimate=float(np.mean(tv_err < eps)) if n_acc else float("nan"),
                               median_error=float(np.median(sup_err)) if n_acc else float("nan"),
                               small_ball_oracle=reflection_series(delta, p.T) if p.d == 1 else None)
        cell.underpowered = n_acc < max(MIN_POWERED, trials_target)
        cells.append(cell)
    est = [c.estimate for c in cells]
    hws = [c.half_width for c in cells]
    summary = {
        "raw_draws": draws,
        "estimates_nondecreasing": nonincreasing_within([-e for e in est], hws),
        "final_estimate": est[-1],
    }
    params = {"eps": eps, "deltas": deltas, "max_draws": max_draws, "trials_target": trials_target,
              "level": level, "problem": problem_to_dict(p), "h": h.values[:, :].tolist() if np.any(h.values) else "zero"}
    return ExperimentReport("approx_continuity", params, int(seed), cells, summary, {}, time.perf_counter() - t0)


# -- small balls and Levy area ------------------------------------------------


def bridge_survival(w, eps, dt):
    """P(a Brownian bridge through the nodes stays in (-eps, eps)), per path.

    ``w`` is (B, N+1) for scalar paths.  Uses the one-barrier exit formula for
    each barrier on each interval; double exits are of order exp(-8 eps^2/dt).
    """
    inside = np.abs(w).max(axis=1) < eps
    out = np.zeros(w.shape[0])
    if not np.any(inside):
        return out
    v = w[inside]
    a, b = v[:, :-1], v[:, 1:]
    p_exit = np.exp(-2.0 * (eps - a) * (eps - b) / dt) + np.exp(-2.0 * (eps + a) * (eps + b) / dt)
    log_stay = np.log1p(-np.minimum(p_exit, 1.0)).sum(axis=1)
    out[inside] = np.exp(log_stay)
    return out


def _small_ball_block(seed, index, size, n_steps, d, dt, eps_grid, monitoring):
    rng = svi.make_rng(seed, _TAG_SMALL_BALL, index)
    w = svi.paths_from_increments(svi.brownian_increments(rng, size, n_steps, d, dt))
    sums = np.zeros(len(eps_grid))
    hits = np.zeros(len(eps_grid), dtype=np.int64)
    if monitoring == "bridge":
        w1 = w[..., 0]
        for j, eps in enumerate(eps_grid):
            s = bridge_survival(w1, eps, dt)
            sums[j] = s.sum()
            hits[j] = int(np.sum(s > 0))
    else:
        sup = np.linalg.norm(w, axis=-1).max(axis=-1)
        for j, eps in enumerate(eps_grid):
            hits[j] = int(np.sum(sup < eps))
            sums[j] = hits[j]
    return sums, hits


def small_ball_study(d=1, T=1.0, eps_grid=(0.5, 0.6, 0.8, 1.0), trials=100_000, seed=0, level=10,
                     monitoring="bridge", workers=1, block=5000):
    """P(||w||_T < eps) per eps and the fit of -log P against eps^-2."""
    t0 = time.perf_counter()
    eps_grid = [float(e) for e in eps_grid]
    if trials < 1:
        raise InputError("trials must be >= 1", field="trials")
    if monitoring not in ("bridge", "grid"):
        raise InputError("monitoring must be 'bridge' or 'grid'", field="monitoring")
    if monitoring == "bridge" and d != 1:
        raise InputError("bridge monitoring is implemented for d = 1 only", field="monitoring")
    dt = 2.0**-level
    n_steps = svi.check_level(level, T)
    tasks = [(seed, i, b - a, n_steps, d, dt, eps_grid, monitoring) for i, (a, b) in enumerate(_blocks(trials, block))]
    sums = np.zeros(len(eps_grid))
    hits = np.zeros(len(eps_grid), dtype=np.int64)
    for s, h in run_tasks(_small_ball_block, tasks, workers):
        sums += s
        hits += h
    cells = []
    for j, eps in enumerate(eps_grid):
        p_hat = float(sums[j] / trials)
        cell = Cell({"eps": eps}, p_hat, trials, binomial_half_width(p_hat, trials), bool(hits[j] == 0),
                    {"hits": int(hits[j]), "neg_log_p": -np.log(p_hat) if p_hat > 0 else float("inf"),
                     "reflection_series": reflection_series(eps, T) if d == 1 else None})
        cells.append(cell)
    usable = [c for c in cells if 0.0 < c.estimate < 1.0 and not c.underpowered]
    fit = linear_fit([c.key["eps"] ** -2 for c in usable], [-np.log(c.estimate) for c in usable])
    params = {"d": d, "T": T, "eps_grid": eps_grid, "trials": trials, "level": level, "monitoring": monitoring}
    return ExperimentReport("small_ball", params, int(seed), cells, {"fit": fit}, {}, time.perf_counter() - t0)


@dataclass(frozen=True, eq=False)
class LevyArea:
    """zeta[k, i, j] = int_0^{t_k} w^i o dw^j by midpoint (trapezoid) sums."""

    dt: float
    zeta: np.ndarray

    def component(self, i, j):
        return GridPath(self.dt, self.zeta[:, i, j])


def levy_area_arrays(w):
    """Midpoint-sum Stratonovich integrals for node arrays w of shape (..., N+1, d)."""
    mid = 0.5 * (w[..., :-1, :] + w[..., 1:, :])
    dw = np.diff(w, axis=-2)
    inc = mid[..., :, None] * dw[..., None, :]
    z0 = np.zeros(w.shape[:-2] + (1, w.shape[-1], w.shape[-1]))
    return np.concatenate([z0, np.cumsum(inc, axis=-3)], axis=-3)


def levy_area(w):
    return LevyArea(w.dt, levy_area_arrays(w.values))


def levy_identity_defects(w, zeta):
    """Max violations of zeta^{ii} = (w^i)^2/2 and zeta^{ij} + zeta^{ji} = w^i w^j."""
    diag = np.abs(np.einsum("...kii->...ki", zeta) - 0.5 * w**2).max()
    outer = w[..., :, None] * w[..., None, :]
    sym = np.abs(zeta + np.swapaxes(zeta, -1, -2) - outer).max()
    return float(diag), float(sym)


def levy_area_study(d=2, T=1.0, deltas=(0.8, 0.6), Ms=(1, 2, 4, 8), trials_target=200, max_draws=2_000_000,
                    seed=0, level=10, workers=1):
    """P(||zeta^{12}||_T > M delta  given  ||w||_T < delta) over the (delta, M) grid."""
    t0 = time.perf_counter()
    if d < 2:
        raise InputError("the Levy area study needs d >= 2", field="d")
    dt = 2.0**-level
    n_steps = svi.check_level(level, T)
    deltas = [float(x) for x in deltas]
    Ms = [float(M) for M in Ms]
    accepted, hits, draws = rejection_sample(deltas, trials_target, max_draws, seed, _TAG_LEVY, n_steps, d, dt,
                                             0.0, workers)
    cells, worst_diag, worst_sym = [], 0.0, 0.0
    for delta in deltas:
        w = np.stack(accepted[delta]) if accepted[delta] else np.zeros((0, n_steps + 1, d))
        zeta = levy_area_arrays(w)
        if w.shape[0]:
            dg, sy = levy_identity_defects(w, zeta)
            worst_diag, worst_sym = max(worst_diag, dg), max(worst_sym, sy)
        sup12 = np.abs(zeta[..., 0, 1]).max(axis=-1) if w.shape[0] else np.zeros(0)
        sup11 = np.abs(zeta[..., 0, 0]).max(axis=-1) if w.shape[0] else np.zeros(0)
        for M in Ms:
            cell = proportion_cell({"delta": delta, "M": M}, int(np.sum(sup12 > M * delta)), sup12.size,
                                   acceptance_rate=hits[delta] / draws if draws else 0.0, raw_draws=draws,
                                   diagonal_estimate=float(np.mean(sup11 > M * delta)) if sup11.size else float("nan"))
            cell.underpowered = sup12.size < max(MIN_POWERED, trials_target)
            cells.append(cell)
    sup_over_delta = []
    for M in Ms:
        group = [c for c in cells if c.key["M"] == M]
        best = max(group, key=lambda c: c.estimate)
        sup_over_delta.append({"M": M, "estimate": best.estimate, "half_width": best.half_width,
                               "delta": best.key["delta"]})
    summary = {
        "raw_draws": draws,
        "sup_over_delta": sup_over_delta,
        "sup_nonincreasing": nonincreasing_within([s["estimate"] for s in sup_over_delta],
                                                  [s["half_width"] for s in sup_over_delta]),
        "identity_defect_diagonal": worst_diag,
        "identity_defect_symmetrization": worst_sym,
    }
    params = {"d": d, "T": T, "deltas": deltas, "Ms": Ms, "trials_target": trials_target,
              "max_draws": max_draws, "level": level}
    return ExperimentReport("levy_area", params, int(seed), cells, summary, {}, time.perf_counter() - t0)


# -- tails of |K|_T ---------------------------------------------------------


def _k_tail_block(p, level, seed, start, stop):
    n_steps = grid_count(p.T, 2.0**-level)
    w = _trial_paths(seed, start, stop, n_steps, p.d, 2.0**-level)
    try:
        _, K, _ = svi.wong_zakai_batch(p, w, level, level)
    except NumericalError:
        return np.full(stop - start, np.nan), np.full(stop - start, np.nan)
    tv = np.linalg.norm(np.diff(K, axis=0), axis=-1).sum(axis=0)
    return tv, np.linalg.norm(w, axis=-1).max(axis=-1)


def k_tail_study(p, trials, seed, r_grid=None, level=10, workers=1, block=50):
    """Empirical tail P(|K|_T > r) and the fit of log-tail against r^2."""
    t0 = time.perf_counter()
    if trials < 1:
        raise InputError("trials must be >= 1", field="trials")
    svi.check_level(level, p.T)
    r_grid = [float(r) for r in (np.linspace(0.25, 3.0, 12) if r_grid is None else r_grid)]
    out = run_tasks(_k_tail_block, [(p, level, seed, a, b) for a, b in _blocks(trials, block)], workers)
    tv = np.concatenate([o[0] for o in out])
    wsup = np.concatenate([o[1] for o in out])
    ok = np.isfinite(tv)
    tv, wsup = tv[ok], wsup[ok]
    cells = []
    for r in r_grid:
        hits = int(np.sum(tv > r))
        cell = proportion_cell({"r": r}, hits, tv.size)
        cell.underpowered = cell.underpowered or hits == 0
        cells.append(cell)
    usable = [c for c in cells if c.extra["hits"] >= 10 and c.estimate < 1.0]
    fit = linear_fit([c.key["r"] ** 2 for c in usable], [np.log(c.estimate) for c in usable])
    summary = {
        "failed_trials": int(np.sum(~ok)),
        "fit": fit,
        "mean_tv": float(tv.mean()) if tv.size else float("nan"),
        "tail_K_gt_3": float(np.mean(tv > 3.0)) if tv.size else float("nan"),
        "tail_w_gt_1_5": float(np.mean(wsup > 1.5)) if tv.size else float("nan"),
        "pathwise_bound_violations": int(np.sum(tv > 2.0 * wsup + 1e-12)),
    }
    params = {"trials": trials, "r_grid": r_grid, "level": level, "problem": problem_to_dict(p)}
    return ExperimentReport("k_tail", params, int(seed), cells, summary, {}, time.perf_counter() - t0)


# -- problem (de)serialization ------------------------------------------------


def problem_to_dict(p):
    return {
        "spec": p.spec.to_dict(),
        "b": p.b.to_dict(),
        "sigma": p.sigma.to_dict(),
        "x": p.x.tolist(),
        "T": p.T,
        "d": p.d,
    }


def problem_from_dict(data, field_name="problem"):
    if not isinstance(data, dict):
        raise InputError("problem must be a JSON object", field=field_name)
    for key in ("spec", "b", "sigma", "x"):
        if key not in data:
            raise InputError(f"problem is missing {key!r}", field=f"{field_name}.{key}")
    spec = monotone.spec_from_dict(data["spec"])
    b = Coefficient.from_dict(data["b"], field=f"{field_name}.b")
    sigma = Coefficient.from_dict(data["sigma"], field=f"{field_name}.sigma")
    return svi.SviProblem(spec, b, sigma, data["x"], float(data.get("T", 1.0)), int(data.get("d", 1)))
