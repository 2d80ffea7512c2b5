"""Deterministic variational inequalities  u' in -d(phi)(u) + f.

Integration is the implicit proximal (catching-up) scheme

    u_{k+1} = J_step(u_k + increment_k),

which keeps every iterate inside D(phi).  The controlled version with drift
b and a piecewise-smooth control h gives the skeleton pair (xi, eta).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import monotone
from .coefficients import Coefficient, check_dimensions
from .errors import InputError
from .paths import GridPath, grid_count

FEASIBILITY_GAP = 1e-6


@dataclass(frozen=True, eq=False)
class DviProblem:
    spec: monotone.OperatorSpec
    forcing: GridPath
    u0: np.ndarray
    T: float

    def __post_init__(self):
        object.__setattr__(self, "u0", monotone._as_vector(self.u0, self.spec.dim, "u0"))
        if self.forcing.dim != self.spec.dim:
            raise InputError("forcing dimension differs from the operator dimension", field="forcing")
        if not 0 < self.T <= self.forcing.horizon * (1 + 1e-9):
            raise InputError("forcing grid must cover [0, T]", field="T")


@dataclass(frozen=True, eq=False)
class SkeletonInput:
    spec: monotone.OperatorSpec
    h: GridPath
    x: np.ndarray
    b: Coefficient
    sigma: Coefficient

    def __post_init__(self):
        object.__setattr__(self, "x", monotone._as_vector(self.x, self.spec.dim, "x"))
        if np.any(self.h.values[0] != 0):
            raise InputError("control must start at 0", field="h")
        check_dimensions(self.b, self.sigma, self.spec.dim, self.h.dim)


@dataclass(frozen=True)
class BrezisReport:
    lhs: float
    rhs: float
    passed: bool


def _check_start(spec, x0):
    gap = np.max(monotone.distance_to_domain(spec, x0))
    if gap > FEASIBILITY_GAP:
        raise InputError(f"initial point is {gap:.3g} away from the domain", field="u0")


def _apply(sigma_vals, dh):
    return np.einsum("...ij,...j->...i", sigma_vals, dh)


def prox_march(spec, x0, step, n_steps, *, forcing=None, drift=None, sigma=None, dh=None, tol=monotone.PROX_TOL):
    """Batched catching-up scheme.

    ``x0`` has shape (B, m); ``forcing`` (n_steps, B, m) is an explicit
    forcing, ``dh`` (n_steps, B, d) the control increments fed through sigma
    with a Heun predictor.  Returns node values (n_steps+1, B, m) and the
    cumulative sum of the increments handed to the resolvent (same shape).
    """
    x0 = np.asarray(x0, dtype=float)
    xi = np.empty((n_steps + 1,) + x0.shape)
    total = np.zeros_like(xi)
    xi[0] = x0
    const_sigma = sigma is not None and sigma.is_constant
    if const_sigma and dh is not None:
        s_const = _apply(sigma(x0), dh)
    for k in range(n_steps):
        cur = xi[k]
        inc = np.zeros_like(cur)
        if forcing is not None:
            inc = inc + step * forcing[k]
        if drift is not None:
            inc = inc + step * drift(cur)
        if dh is not None:
            if const_sigma:
                inc = inc + s_const[k]
            else:
                s0 = _apply(sigma(cur), dh[k])
                pred = spec.prox(cur + inc + s0, step, tol)
                inc = inc + 0.5 * (s0 + _apply(sigma(pred), dh[k]))
        xi[k + 1] = spec.prox(cur + inc, step, tol)
        total[k + 1] = total[k] + inc
    return xi, total


def solve_dvi(p, step, tol=monotone.PROX_TOL):
    """Implicit proximal Euler for u' in -d(phi)(u) + f on [0, T]."""
    n = grid_count(p.T, step)
    _check_start(p.spec, p.u0)
    f = p.forcing.resample(step, p.T).values[:-1]
    xi, _ = prox_march(p.spec, p.u0[None, :], step, n, forcing=f[:, None, :], tol=tol)
    return GridPath(step, xi[:, 0, :])


def brezis_energy_check(p, u, slack=0.05):
    """Discrete form of (int |u'|^2)^(1/2) <= (int |f|^2)^(1/2) + sqrt|phi(u0)|."""
    step = u.dt
    lhs = float(np.sqrt(np.sum(np.linalg.norm(u.increments(), axis=1) ** 2) / step))
    f = p.forcing.resample(step, u.horizon).values[:-1]
    rhs = float(np.sqrt(np.sum(np.linalg.norm(f, axis=1) ** 2) * step) + np.sqrt(abs(monotone.evaluate(p.spec, p.u0))))
    return BrezisReport(lhs, rhs, lhs <= rhs * (1.0 + slack))


def skeleton_batch(spec, b, sigma, x0, dh, step, tol=monotone.PROX_TOL):
    """(xi, eta) node arrays of shape (n+1, B, m) for control increments dh (n, B, d).

    eta_k = sum_{j<k} (step b(xi_j) + sigma-term_j) - xi_k + x, with the same
    quadrature the integrator used, so eta(0) = 0.
    """
    x0 = np.asarray(x0, dtype=float)
    drift = None if (b.is_constant and not np.any(b.offset)) else b
    zero_sigma = sigma.is_constant and not np.any(sigma.offset)
    xi, total = prox_march(spec, x0, step, dh.shape[0], drift=drift, sigma=None if zero_sigma else sigma,
                           dh=None if zero_sigma else dh, tol=tol)
    eta = total - xi + x0
    return xi, eta


def skeleton(inp, step, tol=monotone.PROX_TOL):
    """Skeleton pair (xi(h, x), eta(h, x)) on the grid k * step up to the horizon of h."""
    n = grid_count(inp.h.horizon, step)
    _check_start(inp.spec, inp.x)
    dh = inp.h.resample(step).increments()
    xi, eta = skeleton_batch(inp.spec, inp.b, inp.sigma, inp.x[None, :], dh[:, None, :], step, tol)
    assert xi.shape[0] == n + 1
    return GridPath(step, xi[:, 0, :]), GridPath(step, eta[:, 0, :])


def flow_slack(u, g, alpha, beta, step):
    """min over intervals k and pairs of <u_{k+1} - alpha, dg_k - beta step> / step.

    ``u``, ``g`` are node arrays (N+1, m); each increment is paired with the
    right endpoint, as in the implicit scheme.
    """
    right = u[1:]
    dg = np.diff(g, axis=0)
    gap = right[:, None, :] - alpha[None, :, :]
    push = dg[:, None, :] - step * beta[None, :, :]
    return float(np.min(np.einsum("kpi,kpi->kp", gap, push)) / step)


def validate_flow(spec, u, g, pairs):
    """Discrete check of dG in A(F) dt against graph pairs (alpha, beta)."""
    if u.values.shape != g.values.shape:
        raise InputError("u and g must share a grid")
    if np.any(np.abs(g.values[0]) > 1e-12):
        raise InputError("g(0) must be 0", field="g")
    alpha, beta = pairs
    return flow_slack(u.values, g.values, np.asarray(alpha), np.asarray(beta), u.dt)


def interior_inequality_slack(xi, eta, cert, step):
    """Worst slack over grid-aligned s < t of

        int_s^t <xi - a, d eta> - c1(|eta|_t - |eta|_s) + c2 int_s^t |xi - a| + c1 c2 (t - s).

    ``xi``, ``eta`` are node arrays (N+1, m).
    """
    d_eta = np.diff(eta, axis=0)
    off = xi[1:] - cert.a
    per_step = (
        np.einsum("ki,ki->k", off, d_eta)
        - cert.c1 * np.linalg.norm(d_eta, axis=1)
        + cert.c2 * step * np.linalg.norm(off, axis=1)
        + cert.c1 * cert.c2 * step
    )
    cum = np.concatenate([[0.0], np.cumsum(per_step)])
    running_max = np.maximum.accumulate(cum)[:-1]
    return float(np.min(cum[1:] - running_max))
