"""Catalog of proper l.s.c. convex functions and their subdifferentials.

Every operator here is ``A = subdifferential of phi`` for one of a fixed set of
kinds.  Each kind knows its value, its proximal map (resolvent), the minimal
section of its subdifferential, how to sample exact graph pairs and how to
certify a ball inside its domain.

Points are arrays whose last axis has length ``dim``; leading axes are batch
axes and are handled elementwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import InputError, NumericalError, UnsupportedError

DOMAIN_TOL = 1e-12
PROX_TOL = 1e-10
MAX_SWEEPS = 10_000
SCHEMA_VERSION = 1


def _as_point(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise InputError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def _as_vector(v, dim, name):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (dim,):
        raise InputError(f"{name} must have length {dim}, got {v.shape}", field=name)
    return v


@dataclass(frozen=True)
class InteriorCertificate:
    """A ball ``B(a, c1)`` inside ``D(A)`` with ``|A°| <= c2`` on it."""

    a: np.ndarray
    c1: float
    c2: float

    def __post_init__(self):
        if not self.c1 > 0:
            raise InputError("c1 must be positive")
        if self.c2 < 0:
            raise InputError("c2 must be nonnegative")


class OperatorSpec:
    """Base class: a convex function phi on R^m together with A = d(phi)."""

    kind = "abstract"

    def __init__(self, dim):
        dim = int(dim)
        if dim < 1:
            raise InputError("dim must be a positive integer", field="dim")
        self.dim = dim

    # -- per-kind hooks -------------------------------------------------
    def value(self, x):
        raise NotImplementedError

    def prox(self, x, lam, tol=PROX_TOL):
        raise NotImplementedError

    def in_domain(self, x, tol=DOMAIN_TOL):
        return np.ones(np.shape(x)[:-1], dtype=bool)

    def project_domain(self, x):
        """Projection onto the closure of D(phi); identity for finite phi."""
        return np.array(x, dtype=float)

    def min_section(self, x):
        raise NotImplementedError

    def sample_graph(self, count, rng):
        raise NotImplementedError

    def certificate(self):
        raise NotImplementedError

    def params(self):
        return {}

    # -- shared ---------------------------------------------------------
    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "dim": self.dim,
            "params": self.params(),
        }

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"

    def __eq__(self, other):
        return type(self) is type(other) and _canon(self.to_dict()) == _canon(other.to_dict())

    def __hash__(self):
        return hash(_canon(self.to_dict()))


def _canon(obj):
    return json.dumps(obj, sort_keys=True)


class Zero(OperatorSpec):
    kind = "Zero"

    def value(self, x):
        x = _as_point(x, self.dim)
        return np.zeros(x.shape[:-1])

    def prox(self, x, lam, tol=PROX_TOL):
        return np.array(_as_point(x, self.dim))

    def min_section(self, x):
        return np.zeros(self.dim)

    def sample_graph(self, count, rng):
        alpha = 3.0 * rng.standard_normal((count, self.dim))
        return alpha, np.zeros_like(alpha)

    def certificate(self):
        return InteriorCertificate(np.zeros(self.dim), 1.0, 0.0)


class Quadratic(OperatorSpec):
    """phi(x) = 0.5 x'Qx + c'x with Q symmetric positive semidefinite."""

    kind = "Quadratic"

    def __init__(self, Q, c=None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise InputError("Q must be a square matrix", field="Q")
        super().__init__(Q.shape[0])
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise InputError("Q must be symmetric", field="Q")
        eig = np.linalg.eigvalsh(Q)
        if eig[0] < -1e-12:
            raise InputError("Q must be positive semidefinite", field="Q")
        self.Q = Q
        self.c = np.zeros(self.dim) if c is None else _as_vector(c, self.dim, "c")
        self._eig_min = max(float(eig[0]), 0.0)
        self._eig_max = max(float(eig[-1]), 0.0)
        self._inv_cache = {}

    def gradient(self, x):
        return np.einsum("ij,...j->...i", self.Q, x) + self.c

    def value(self, x):
        x = _as_point(x, self.dim)
        return 0.5 * np.einsum("...i,...i->...", x, np.einsum("ij,...j->...i", self.Q, x)) + x @ self.c

    def _inverse(self, lam):
        inv = self._inv_cache.get(lam)
        if inv is None:
            inv = np.linalg.inv(np.eye(self.dim) + lam * self.Q)
            if len(self._inv_cache) < 64:
                self._inv_cache[lam] = inv
        return inv

    def prox(self, x, lam, tol=PROX_TOL):
        x = _as_point(x, self.dim)
        # einsum keeps row results independent of the batch size
        return np.einsum("ij,...j->...i", self._inverse(lam), x - lam * self.c)

    def min_section(self, x):
        return self.gradient(_as_point(x, self.dim))

    def sample_graph(self, count, rng):
        alpha = 2.0 * rng.standard_normal((count, self.dim))
        return alpha, self.gradient(alpha)

    def certificate(self):
        c1 = 1.0
        a = np.zeros(self.dim)
        return InteriorCertificate(a, c1, float(np.linalg.norm(self.c) + self._eig_max * c1))

    def params(self):
        return {"Q": self.Q.tolist(), "c": self.c.tolist()}


class ScaledL1(OperatorSpec):
    """phi(x) = weight * sum_i |x_i|."""

    kind = "ScaledL1"

    def __init__(self, weight, dim=1):
        super().__init__(dim)
        weight = float(weight)
        if not weight >= 0:
            raise InputError("weight must be >= 0", field="weight")
        self.weight = weight

    def value(self, x):
        x = _as_point(x, self.dim)
        return self.weight * np.abs(x).sum(axis=-1)

    def prox(self, x, lam, tol=PROX_TOL):
        x = _as_point(x, self.dim)
        return np.sign(x) * np.maximum(np.abs(x) - lam * self.weight, 0.0)

    def min_section(self, x):
        x = _as_point(x, self.dim)
        return self.weight * np.sign(x)

    def sample_graph(self, count, rng):
        alpha = 2.0 * rng.standard_normal((count, self.dim))
        at_kink = rng.random((count, self.dim)) < 0.3
        alpha[at_kink] = 0.0
        beta = self.weight * np.sign(alpha)
        beta[at_kink] = rng.uniform(-self.weight, self.weight, size=int(at_kink.sum()))
        return alpha, beta

    def certificate(self):
        return InteriorCertificate(np.zeros(self.dim), 1.0, self.weight * np.sqrt(self.dim))

    def params(self):
        return {"weight": self.weight}


class Indicator(OperatorSpec):
    """Indicator of a closed convex set C: 0 on C, +inf outside."""

    def residuals(self, x):
        """Signed constraint residuals, <= 0 inside; shape (..., ncons)."""
        raise NotImplementedError

    def in_domain(self, x, tol=DOMAIN_TOL):
        x = _as_point(x, self.dim)
        return np.all(self.residuals(x) <= tol, axis=-1)

    def value(self, x):
        return np.where(self.in_domain(x), 0.0, np.inf)

    def prox(self, x, lam, tol=PROX_TOL):
        return self.project(x, tol)

    def project_domain(self, x):
        return self.project(x)

    def project(self, x, tol=PROX_TOL):
        raise NotImplementedError

    def tangent_projection(self, x, v):
        """Projection of v onto the tangent cone of C at x (x in C)."""
        raise NotImplementedError

    def min_section(self, x):
        x = _as_point(x, self.dim)
        if not self.in_domain(x):
            return None
        return np.zeros(self.dim)


class IndicatorBox(Indicator):
    kind = "IndicatorBox"

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray([-np.inf if v is None else v for v in np.atleast_1d(lower)], dtype=float))
        upper = np.atleast_1d(np.asarray([np.inf if v is None else v for v in np.atleast_1d(upper)], dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise InputError("lower and upper must be vectors of equal length", field="lower")
        super().__init__(lower.size)
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise InputError("bounds must not be NaN", field="lower")
        if not np.all(lower < upper):
            raise InputError("box must have nonempty interior (lower < upper)", field="upper")
        self.lower, self.upper = lower, upper

    def residuals(self, x):
        return np.concatenate([self.lower - x, x - self.upper], axis=-1)

    def project(self, x, tol=PROX_TOL):
        return np.clip(_as_point(x, self.dim), self.lower, self.upper)

    def tangent_projection(self, x, v):
        v = np.array(v, dtype=float)
        at_low = x <= self.lower + DOMAIN_TOL
        at_up = x >= self.upper - DOMAIN_TOL
        v[at_low] = np.maximum(v[at_low], 0.0)
        v[at_up] = np.minimum(v[at_up], 0.0)
        return v

    def _interior(self, count, rng):
        out = np.empty((count, self.dim))
        for i, (lo, up) in enumerate(zip(self.lower, self.upper)):
            if np.isfinite(lo) and np.isfinite(up):
                out[:, i] = rng.uniform(lo, up, count)
            elif np.isfinite(lo):
                out[:, i] = lo + rng.exponential(2.0, count)
            elif np.isfinite(up):
                out[:, i] = up - rng.exponential(2.0, count)
            else:
                out[:, i] = 3.0 * rng.standard_normal(count)
        return out

    def sample_graph(self, count, rng):
        alpha = self._interior(count, rng)
        beta = np.zeros_like(alpha)
        finite_lo, finite_up = np.isfinite(self.lower), np.isfinite(self.upper)
        can_touch = np.flatnonzero(finite_lo | finite_up)
        if can_touch.size == 0:
            return alpha, beta
        for row in np.flatnonzero(rng.random(count) < 0.3):
            active = can_touch[rng.random(can_touch.size) < 0.5]
            if active.size == 0:
                active = can_touch[[rng.integers(can_touch.size)]]
            for i in active:
                use_lower = finite_lo[i] and (not finite_up[i] or rng.random() < 0.5)
                mag = rng.uniform(0.0, 10.0)
                if use_lower:
                    alpha[row, i], beta[row, i] = self.lower[i], -mag
                else:
                    alpha[row, i], beta[row, i] = self.upper[i], mag
        return alpha, beta

    def certificate(self):
        a = np.zeros(self.dim)
        half_width = np.full(self.dim, np.inf)
        for i, (lo, up) in enumerate(zip(self.lower, self.upper)):
            if np.isfinite(lo) and np.isfinite(up):
                a[i], half_width[i] = 0.5 * (lo + up), 0.5 * (up - lo)
            elif np.isfinite(lo):
                a[i], half_width[i] = lo + 1.0, 1.0
            elif np.isfinite(up):
                a[i], half_width[i] = up - 1.0, 1.0
        r = float(half_width.min())
        c1 = 1.0 if not np.isfinite(r) else 0.5 * r
        return InteriorCertificate(a, c1, 0.0)

    def params(self):
        return {
            "lower": [None if not np.isfinite(v) else float(v) for v in self.lower],
            "upper": [None if not np.isfinite(v) else float(v) for v in self.upper],
        }


class IndicatorBall(Indicator):
    kind = "IndicatorBall"

    def __init__(self, center, radius):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        super().__init__(center.size)
        radius = float(radius)
        if not radius > 0:
            raise InputError("radius must be positive", field="radius")
        self.center, self.radius = center, radius

    def residuals(self, x):
        return (np.linalg.norm(x - self.center, axis=-1) - self.radius)[..., None]

    def project(self, x, tol=PROX_TOL):
        x = _as_point(x, self.dim)
        off = x - self.center
        dist = np.linalg.norm(off, axis=-1, keepdims=True)
        scale = np.where(dist > self.radius, self.radius / np.where(dist > 0, dist, 1.0), 1.0)
        return self.center + off * scale

    def tangent_projection(self, x, v):
        off = x - self.center
        dist = np.linalg.norm(off)
        if dist < self.radius - DOMAIN_TOL:
            return np.array(v, dtype=float)
        n = off / dist
        return v - max(float(v @ n), 0.0) * n

    def sample_graph(self, count, rng):
        u = rng.standard_normal((count, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        rad = self.radius * rng.random(count) ** (1.0 / self.dim)
        on_boundary = rng.random(count) < 0.3
        rad[on_boundary] = self.radius
        alpha = self.center + rad[:, None] * u
        beta = np.zeros_like(alpha)
        beta[on_boundary] = rng.uniform(0.0, 10.0, int(on_boundary.sum()))[:, None] * u[on_boundary]
        return alpha, beta

    def certificate(self):
        return InteriorCertificate(self.center.copy(), 0.5 * self.radius, 0.0)

    def params(self):
        return {"center": self.center.tolist(), "radius": self.radius}


class IndicatorHalfspaces(Indicator):
    """Polyhedron {x : normals[i] . x <= offsets[i] for all i}."""

    kind = "IndicatorHalfspaces"

    def __init__(self, normals, offsets):
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        if normals.ndim != 2 or offsets.shape != (normals.shape[0],):
            raise InputError("need one offset per normal", field="offsets")
        super().__init__(normals.shape[1])
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms == 0):
            raise InputError("normals must be nonzero", field="normals")
        self.normals, self.offsets = normals, offsets
        self._norms = norms
        self._center, self._radius = self._chebyshev()

    def _chebyshev(self):
        cost = np.zeros(self.dim + 1)
        cost[-1] = -1.0
        a_ub = np.hstack([self.normals, self._norms[:, None]])
        bounds = [(None, None)] * self.dim + [(0.0, 1.0)]
        res = linprog(cost, A_ub=a_ub, b_ub=self.offsets, bounds=bounds, method="highs")
        if res.status != 0:
            raise InputError(f"polyhedron is empty or LP failed: {res.message}", field="offsets")
        return res.x[:-1], float(res.x[-1])

    def residuals(self, x):
        return (np.einsum("ij,...j->...i", self.normals, x) - self.offsets) / self._norms

    def project(self, x, tol=PROX_TOL):
        x = _as_point(x, self.dim)
        if x.ndim == 1:
            return self._project_one(x, tol)
        flat = x.reshape(-1, self.dim)
        out = np.array([self._project_one(row, tol) for row in flat])
        return out.reshape(x.shape)

    def _project_one(self, x, tol):
        if np.all(self.residuals(x) <= DOMAIN_TOL):
            return x.copy()
        z = x.copy()
        incr = np.zeros_like(self.normals)
        sq = self._norms**2
        converged = False
        for _ in range(MAX_SWEEPS):
            z_prev = z
            for i, a in enumerate(self.normals):
                y = z + incr[i]
                viol = a @ y - self.offsets[i]
                p = y - (max(viol, 0.0) / sq[i]) * a if viol > 0 else y
                incr[i] = y - p
                z = p
            if np.linalg.norm(z - z_prev) <= tol:
                converged = True
                break
        polished = self._polish(x, z)
        if polished is not None:
            return polished
        if not converged:
            raise NumericalError("Dykstra projection did not converge", self._kkt_residual(x, z))
        return z

    def _polish(self, x, z):
        # exact projection onto the affine hull of the active facets found by Dykstra
        active = self.residuals(z) >= -1e-9
        if not np.any(active):
            return None
        a = self.normals[active]
        mu, *_ = np.linalg.lstsq(a @ a.T, a @ x - self.offsets[active], rcond=None)
        if np.any(mu < -1e-12):
            return None
        cand = x - a.T @ mu
        if np.max(self.residuals(cand)) > DOMAIN_TOL or np.linalg.norm(cand - z) > 1e-6:
            return None
        return cand

    def _kkt_residual(self, x, z):
        feas = max(float(np.max(self.residuals(z))), 0.0)
        return feas + float(np.linalg.norm(self.normal_projection(z, x - z) - (x - z)))

    def normal_projection(self, x, v):
        """Projection of v onto the normal cone at x."""
        active = self.residuals(x) >= -DOMAIN_TOL * 1e3
        if not np.any(active):
            return np.zeros(self.dim)
        a = self.normals[active]
        mu, _ = nnls(a.T, np.asarray(v, dtype=float))
        return a.T @ mu

    def tangent_projection(self, x, v):
        v = np.asarray(v, dtype=float)
        return v - self.normal_projection(x, v)

    def sample_graph(self, count, rng):
        alpha = np.empty((count, self.dim))
        beta = np.zeros((count, self.dim))
        for row in range(count):
            u = rng.standard_normal(self.dim)
            u /= np.linalg.norm(u)
            speed = self.normals @ u
            if rng.random() < 0.3 and np.any(speed > 0):
                # shoot a ray from the Chebyshev center until it hits a facet
                gaps = (self.offsets - self.normals @ self._center) / np.where(speed > 0, speed, 1.0)
                gaps[speed <= 0] = np.inf
                i = int(np.argmin(gaps))
                alpha[row] = self._center + gaps[i] * u
                beta[row] = rng.uniform(0.0, 10.0) * self.normals[i] / self._norms[i]
            else:
                alpha[row] = self._center + self._radius * rng.random() * u
        return alpha, beta

    def certificate(self):
        if not self._radius > 0:
            raise UnsupportedError("polyhedron has empty interior")
        return InteriorCertificate(self._center.copy(), 0.5 * self._radius, 0.0)

    def params(self):
        return {"normals": self.normals.tolist(), "offsets": self.offsets.tolist()}


class Sum(OperatorSpec):
    """Quadratic restricted to a constraint set: q(x) + indicator_C(x)."""

    kind = "Sum"

    def __init__(self, smooth, constraint):
        if not isinstance(smooth, Quadratic):
            raise InputError("smooth part must be Quadratic", field="smooth")
        if not isinstance(constraint, Indicator):
            raise InputError("constraint part must be an indicator kind", field="constraint")
        if smooth.dim != constraint.dim:
            raise InputError("smooth and constraint dimensions differ", field="constraint")
        super().__init__(smooth.dim)
        self.smooth, self.constraint = smooth, constraint

    def in_domain(self, x, tol=DOMAIN_TOL):
        return self.constraint.in_domain(x, tol)

    def value(self, x):
        return np.where(self.in_domain(x), self.smooth.value(x), np.inf)

    def project_domain(self, x):
        return self.constraint.project(x)

    def prox(self, x, lam, tol=PROX_TOL):
        x = _as_point(x, self.dim)
        if x.ndim == 1:
            return self._prox_one(x, lam, tol)
        flat = x.reshape(-1, self.dim)
        return np.array([self._prox_one(row, lam, tol) for row in flat]).reshape(x.shape)

    def _prox_one(self, x, lam, tol):
        q = self.smooth
        big, small = 1.0 + lam * q._eig_max, 1.0 + lam * q._eig_min
        step = 1.0 / big
        rate = 1.0 - small / big
        z = self.constraint.project(x)
        for _ in range(MAX_SWEEPS):
            grad = z - x + lam * q.gradient(z)
            z_new = self.constraint.project(z - step * grad)
            move = float(np.linalg.norm(z_new - z))
            z = z_new
            # a-posteriori error bound of a contraction with factor `rate`
            if move == 0.0 or rate / (1.0 - rate) * move <= tol:
                return z
        raise NumericalError("projected-gradient prox did not converge", move / step)

    def min_section(self, x):
        x = _as_point(x, self.dim)
        if not self.in_domain(x):
            return None
        g = self.smooth.gradient(x)
        return -self.constraint.tangent_projection(x, -g)

    def sample_graph(self, count, rng):
        alpha, beta = self.constraint.sample_graph(count, rng)
        return alpha, beta + self.smooth.gradient(alpha)

    def certificate(self):
        cert = self.constraint.certificate()
        q = self.smooth
        c2 = float(np.linalg.norm(q.gradient(cert.a)) + q._eig_max * cert.c1)
        return InteriorCertificate(cert.a, cert.c1, c2)

    def params(self):
        return {"smooth": self.smooth.to_dict(), "constraint": self.constraint.to_dict()}


KINDS = {
    cls.kind: cls
    for cls in (Zero, Quadratic, ScaledL1, IndicatorBox, IndicatorBall, IndicatorHalfspaces, Sum)
}


def spec_from_dict(data):
    """Inverse of ``OperatorSpec.to_dict``; raises InputError naming the bad field."""
    if not isinstance(data, dict):
        raise InputError("operator spec must be a JSON object", field="spec")
    kind = data.get("kind")
    if kind not in KINDS:
        raise InputError(f"unknown operator kind {kind!r}", field="kind")
    params = data.get("params", {})
    dim = data.get("dim")
    try:
        if kind == "Zero":
            spec = Zero(dim)
        elif kind == "Quadratic":
            spec = Quadratic(params["Q"], params.get("c"))
        elif kind == "ScaledL1":
            spec = ScaledL1(params["weight"], dim if dim is not None else 1)
        elif kind == "IndicatorBox":
            spec = IndicatorBox(params["lower"], params["upper"])
        elif kind == "IndicatorBall":
            spec = IndicatorBall(params["center"], params["radius"])
        elif kind == "IndicatorHalfspaces":
            spec = IndicatorHalfspaces(params["normals"], params["offsets"])
        else:
            spec = Sum(spec_from_dict(params["smooth"]), spec_from_dict(params["constraint"]))
    except KeyError as exc:
        raise InputError(f"missing parameter {exc.args[0]!r} for {kind}", field=exc.args[0]) from None
    except TypeError as exc:
        raise InputError(f"bad parameters for {kind}: {exc}", field="params") from None
    if dim is not None and int(dim) != spec.dim:
        raise InputError(f"dim {dim} does not match parameters ({spec.dim})", field="dim")
    return spec


# -- module-level operations ---------------------------------------------


def evaluate(spec, x):
    """phi(x); +inf exactly outside D(phi)."""
    out = spec.value(_as_point(x, spec.dim))
    return float(out) if np.ndim(out) == 0 else out


def resolvent(spec, lam, x, tol=PROX_TOL):
    """J_lam x = argmin_z 0.5|z - x|^2 + lam * phi(z)."""
    if not lam > 0:
        raise InputError("lambda must be positive", field="lambda")
    return spec.prox(_as_point(x, spec.dim), float(lam), tol)


def yosida(spec, lam, x, tol=PROX_TOL):
    """A_lam x = (x - J_lam x) / lam."""
    x = _as_point(x, spec.dim)
    return (x - resolvent(spec, lam, x, tol)) / lam


def minimal_section(spec, x):
    """Least-norm element of d(phi)(x), or None when x is not in D(A)."""
    x = _as_point(x, spec.dim)
    if x.ndim != 1:
        raise InputError("minimal_section takes a single point")
    return spec.min_section(x)


def sample_graph(spec, count, seed):
    """``count`` exact pairs (alpha, beta) with beta in d(phi)(alpha)."""
    if count < 1:
        raise InputError("count must be >= 1", field="count")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return spec.sample_graph(int(count), rng)


def interior_certificate(spec):
    return spec.certificate()


def distance_to_domain(spec, x):
    x = _as_point(x, spec.dim)
    return np.linalg.norm(x - spec.project_domain(x), axis=-1)


def certificate_holds(spec, cert, n_dirs=64, seed=0):
    """Check B(a, c1) lies in D(A) by projecting sampled sphere points."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n_dirs, spec.dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    if spec.dim == 1:
        u = np.array([[1.0], [-1.0]])
    pts = cert.a + cert.c1 * u
    return bool(np.all(distance_to_domain(spec, pts) <= DOMAIN_TOL) and np.all(spec.in_domain(pts)))
