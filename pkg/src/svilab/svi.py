"""Stochastic variational inequalities  dX in b dt + sigma o dw - d(phi)(X) dt.

Brownian drivers live on dyadic grids.  The Wong-Zakai approximant at level n
replaces w by its piecewise-linear interpolant through the nodes k 2^-n and
solves the resulting deterministic inequality with the skeleton integrator;
the finest level serves as the reference solution.  The 1-D reflected case
has an exact discrete oracle (the Skorokhod map).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dvi, monotone
from .coefficients import Coefficient, check_dimensions
from .errors import InputError
from .paths import GridPath, grid_count, running_variation

MAX_LEVEL = 24
FEASIBILITY_TOL = 1e-8
FLOW_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SviProblem:
    spec: monotone.OperatorSpec
    b: Coefficient
    sigma: Coefficient
    x: np.ndarray
    T: float = 1.0
    d: int = 1

    def __post_init__(self):
        object.__setattr__(self, "x", monotone._as_vector(self.x, self.spec.dim, "x"))
        if not self.T > 0:
            raise InputError("horizon T must be positive", field="T")
        check_dimensions(self.b, self.sigma, self.spec.dim, self.d)
        if float(monotone.distance_to_domain(self.spec, self.x)) > 1e-12:
            raise InputError("initial point must lie in the closure of D(A)", field="x")

    @property
    def m(self):
        return self.spec.dim


@dataclass(frozen=True, eq=False)
class DyadicDriver:
    level: int
    w: GridPath

    @property
    def dt(self):
        return self.w.dt


@dataclass(frozen=True, eq=False)
class SolutionPair:
    X: GridPath
    K: GridPath
    tv_K: float
    residual: float
    driver: GridPath | None = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class ItoCorrection:
    """a = sigma sigma^T and (sigma' sigma)[i, l, l'] = sum_j d_j sigma^{il} sigma^{jl'}."""

    a: np.ndarray
    sigma_prime_sigma: np.ndarray

    @property
    def stratonovich_drift(self):
        """0.5 * sum_l (sigma' sigma)[i, l, l]: the Stratonovich-to-Ito drift shift."""
        return 0.5 * np.einsum("...ill->...i", self.sigma_prime_sigma)


def ito_correction(sigma, x):
    x = np.asarray(x, dtype=float)
    s = sigma(x)
    jac = sigma.jacobian(x)  # (..., m, d, m): d sigma^{il} / d x_j
    a = np.einsum("...ik,...jk->...ij", s, s)
    sps = np.einsum("...ilj,...jm->...ilm", jac, s)
    return ItoCorrection(a, sps)


def generator_drift(b, sigma, x):
    """First-order part of the generator: b + 0.5 sum_l (sigma' sigma)^{l,l}."""
    return b(x) + ito_correction(sigma, x).stratonovich_drift


# -- drivers --------------------------------------------------------------


def make_rng(seed, *key):
    """Generator for the stream (seed, *key); independent across keys."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def check_level(level, T):
    if not 0 <= level <= MAX_LEVEL:
        raise InputError(f"level must be in [0, {MAX_LEVEL}]", field="level")
    return grid_count(T, 2.0**-level)


def brownian_increments(rng, n_paths, n_steps, d, dt):
    return np.sqrt(dt) * rng.standard_normal((n_paths, n_steps, d))


def paths_from_increments(inc):
    shape = inc.shape[:-2] + (1, inc.shape[-1])
    return np.concatenate([np.zeros(shape), np.cumsum(inc, axis=-2)], axis=-2)


def generate_driver(d, T, level, seed):
    """Standard Brownian path on the grid k 2^-level, k 2^-level <= T."""
    n = check_level(level, T)
    dt = 2.0**-level
    rng = make_rng(seed) if not isinstance(seed, tuple) else make_rng(*seed)
    w = paths_from_increments(brownian_increments(rng, 1, n, d, dt))[0]
    return DyadicDriver(level, GridPath(dt, w))


def coarsen_driver(drv, n):
    """Piecewise-linear interpolant w_n through the nodes k 2^-n, and its slope.

    Both are returned on the fine grid; the slope path holds at node k the
    slope on [t_k, t_{k+1}) (the last node repeats the final slab).
    """
    if not 0 <= n <= drv.level:
        raise InputError("coarse level must not exceed the driver level", field="n")
    dh = dyadic_increments(drv.w.values, drv.level, n, drv.dt)
    wn = paths_from_increments(dh)
    slope = dh / drv.dt
    slope = np.concatenate([slope, slope[-1:]])
    return GridPath(drv.dt, wn), GridPath(drv.dt, slope)


def dyadic_increments(w, fine_level, n, substep):
    """Increments of w_n over a substep grid.

    ``w`` holds fine-grid node values with time on axis -2.  ``substep`` must
    divide the slab width 2^-n.
    """
    if n > fine_level:
        raise InputError("coarse level must not exceed the driver level", field="n")
    stride = 2 ** (fine_level - n)
    if (w.shape[-2] - 1) % stride:
        raise InputError(f"horizon is not a multiple of 2^-{n}", field="n")
    coarse = np.diff(w[..., ::stride, :], axis=-2)
    r = grid_count(2.0**-n, substep)
    if r == 1:
        return coarse
    return np.repeat(coarse / r, r, axis=-2)


# -- solvers --------------------------------------------------------------


def stratonovich_defect(p, X, K, dw, step):
    """sup_k |X_k - x - sum_{j<k}(b(X_j) step + (sigma(X_j)+sigma(X_{j+1}))/2 dw_j) + K_k|.

    Arrays carry time on axis 0: X, K (N+1, ..., m), dw (N, ..., d).
    Returns the sup per path.
    """
    sig = p.sigma(X)
    trap = 0.5 * np.einsum("k...ij,k...j->k...i", sig[:-1] + sig[1:], dw)
    inc = step * p.b(X[:-1]) + trap
    integral = np.concatenate([np.zeros_like(X[:1]), np.cumsum(inc, axis=0)])
    defect = X - p.x - integral + K
    return np.linalg.norm(defect, axis=-1).max(axis=0)


def wong_zakai_batch(p, w, fine_level, n, substep=None, tol=monotone.PROX_TOL):
    """X_n, K_n node arrays (N_sub+1, B, m) for fine driver nodes w of shape (B, N+1, d)."""
    substep = 2.0**-fine_level if substep is None else substep
    dh = dyadic_increments(w, fine_level, n, substep)  # (B, N_sub, d)
    dh = np.moveaxis(dh, -2, 0)
    x0 = np.broadcast_to(p.x, (w.shape[0], p.m))
    X, K = dvi.skeleton_batch(p.spec, p.b, p.sigma, x0, dh, substep, tol)
    return X, K, dh


def _pair_from_arrays(p, X, K, dh, step):
    residual = float(stratonovich_defect(p, X[:, None], K[:, None], dh[:, None], step)[0])
    Xp, Kp = GridPath(step, X), GridPath(step, K)
    driver = GridPath(step, paths_from_increments(dh))
    return SolutionPair(Xp, Kp, float(running_variation(Kp)[-1]), residual, driver)


def wong_zakai_solve(p, drv, n, substep=None, tol=monotone.PROX_TOL):
    """Solution (X_n, K_n) of the inequality driven by the dyadic interpolant w_n."""
    if drv.w.dim != p.d:
        raise InputError("driver dimension differs from the problem's d", field="d")
    substep = drv.dt if substep is None else substep
    if abs(drv.w.horizon - p.T) > 1e-12 * p.T:
        drv = DyadicDriver(drv.level, drv.w.truncate(p.T))
    X, K, dh = wong_zakai_batch(p, drv.w.values[None], drv.level, n, substep, tol)
    return _pair_from_arrays(p, X[:, 0], K[:, 0], dh[:, 0], substep)


def reference_solve(p, drv, tol=monotone.PROX_TOL):
    """Finest-level Wong-Zakai run; stands in for the limit (X, K)."""
    return wong_zakai_solve(p, drv, drv.level, drv.dt, tol)


def skorokhod_arrays(x, w):
    """Discrete Skorokhod map at 0 for node arrays w with time on axis -1."""
    free = x + w
    push = np.maximum(0.0, np.maximum.accumulate(-free, axis=-1))
    return free + push, -push


def skorokhod_oracle(x, w):
    """Reflection at 0 of x + w: X = x + w - K with K = -max(0, max_{s<=t} -(x + w(s)))."""
    x = float(x)
    if x < 0:
        raise InputError("starting point must be >= 0 for reflection at 0", field="x")
    if w.dim != 1:
        raise InputError("the Skorokhod oracle is one-dimensional", field="w")
    X, K = skorokhod_arrays(x, w.values[:, 0])
    Xp, Kp = GridPath(w.dt, X), GridPath(w.dt, K)
    residual = float(np.max(np.abs(X - x - w.values[:, 0] + K)))
    return SolutionPair(Xp, Kp, float(running_variation(Kp)[-1]), residual, w)


# -- validation -----------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    initial_gap: float
    max_infeasibility: float
    k_start: float
    tv_K: float
    residual: float
    residual_budget: float
    flow_slack: float
    interior_slack: float

    @property
    def clauses(self):
        return {
            "i_initial_and_feasible": self.initial_gap <= FEASIBILITY_TOL and self.max_infeasibility <= FEASIBILITY_TOL,
            "ii_K0_and_finite_variation": self.k_start == 0.0 and np.isfinite(self.tv_K),
            "iii_dynamics": self.residual <= self.residual_budget,
            "iv_flow": self.flow_slack >= -FLOW_TOL,
            "interior_inequality": self.interior_slack >= -FLOW_TOL,
        }

    @property
    def passed(self):
        return all(self.clauses.values())

    def to_dict(self):
        out = {k: float(v) for k, v in self.__dict__.items()}
        out["clauses"] = {k: bool(v) for k, v in self.clauses.items()}
        out["passed"] = bool(self.passed)
        return out


def residual_budget(step, w_values):
    scale = float(np.linalg.norm(w_values, axis=-1).max())
    return 5.0 * np.sqrt(step) * (1.0 + scale)


def validate_arrays(p, X, K, w, step, pairs, cert):
    """Clause-by-clause check on node arrays X, K (N+1, m), driver nodes w (N+1, d)."""
    dw = np.diff(w, axis=0)
    residual = float(stratonovich_defect(p, X[:, None], K[:, None], dw[:, None], step)[0])
    alpha, beta = pairs
    return ValidationReport(
        initial_gap=float(np.linalg.norm(X[0] - p.x)),
        max_infeasibility=float(np.max(monotone.distance_to_domain(p.spec, X))),
        k_start=float(np.max(np.abs(K[0]))),
        tv_K=float(np.sum(np.linalg.norm(np.diff(K, axis=0), axis=1))),
        residual=residual,
        residual_budget=residual_budget(step, w),
        flow_slack=dvi.flow_slack(X, K, alpha, beta, step),
        interior_slack=dvi.interior_inequality_slack(X, K, cert, step),
    )


def validate_solution(p, sol, pairs=None, cert=None, w=None, seed=0):
    """Check (X, K) against the four solution clauses plus the interior-point inequality.

    ``w`` defaults to the driver stored on the solution; pass the true
    Brownian path (same grid) to measure the dynamics defect against it.
    """
    pairs = monotone.sample_graph(p.spec, 32, seed) if pairs is None else pairs
    cert = monotone.interior_certificate(p.spec) if cert is None else cert
    w = sol.driver if w is None else w
    if w is None:
        raise InputError("no driver available for the dynamics check", field="w")
    if w.values.shape[0] != sol.X.values.shape[0]:
        raise InputError("driver and solution grids differ", field="w")
    return validate_arrays(p, sol.X.values, sol.K.values, w.values, sol.X.dt, pairs, cert)
