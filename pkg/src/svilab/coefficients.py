"""Closed catalog of drift and diffusion coefficients.

A coefficient maps points ``x`` of shape ``(..., m)`` to arrays of shape
``(..., *out_shape)``: ``(m,)`` for a drift b and ``(m, d)`` for a diffusion
sigma.  Kinds:

``constant``  offset
``linear``    offset + L x
``tanh``      offset + L tanh(x)
``sin``       offset + L sin(x)

``L`` has shape ``out_shape + (m,)``.  The last two kinds are bounded with
bounded derivatives of every order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

_KINDS = ("constant", "linear", "tanh", "sin")


@dataclass(frozen=True, eq=False)
class Coefficient:
    kind: str
    offset: np.ndarray
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown coefficient kind {self.kind!r}", field="kind")
        offset = np.asarray(self.offset, dtype=float)
        object.__setattr__(self, "offset", offset)
        if self.kind == "constant":
            object.__setattr__(self, "matrix", None)
            return
        if self.matrix is None:
            raise InputError(f"{self.kind} coefficient needs a matrix", field="matrix")
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.shape[:-1] != offset.shape:
            raise InputError(
                f"matrix shape {matrix.shape} incompatible with offset shape {offset.shape}",
                field="matrix",
            )
        object.__setattr__(self, "matrix", matrix)

    @property
    def out_shape(self):
        return self.offset.shape

    @property
    def is_constant(self):
        return self.kind == "constant" or not np.any(self.matrix)

    def in_dim(self):
        return None if self.matrix is None else self.matrix.shape[-1]

    def _inner(self, x):
        if self.kind == "linear":
            return x
        if self.kind == "tanh":
            return np.tanh(x)
        return np.sin(x)

    def _inner_deriv(self, x):
        if self.kind == "linear":
            return np.ones_like(x)
        if self.kind == "tanh":
            return 1.0 / np.cosh(x) ** 2
        return np.cos(x)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.broadcast_to(self.offset, x.shape[:-1] + self.out_shape).copy()
        return self.offset + _contract(self.matrix, self._inner(x))

    def jacobian(self, x):
        """Derivative with respect to x: shape ``(..., *out_shape, m)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.zeros(x.shape[:-1] + self.out_shape + (x.shape[-1],))
        deriv = self._inner_deriv(x)
        expand = (slice(None),) * (x.ndim - 1) + (None,) * len(self.out_shape) + (slice(None),)
        return self.matrix * deriv[expand]

    def to_dict(self):
        out = {"kind": self.kind, "offset": self.offset.tolist()}
        if self.matrix is not None:
            out["matrix"] = self.matrix.tolist()
        return out

    @classmethod
    def from_dict(cls, data, field="coefficient"):
        if not isinstance(data, dict) or "kind" not in data or "offset" not in data:
            raise InputError("coefficient needs 'kind' and 'offset'", field=field)
        try:
            return cls(data["kind"], data["offset"], data.get("matrix"))
        except InputError as exc:
            raise InputError(str(exc), field=f"{field}.{exc.field or 'kind'}") from None


_SUBSCRIPTS = {0: "j,...j->...", 1: "ij,...j->...i", 2: "ilj,...j->...il"}


def _contract(matrix, inner):
    # matrix: out_shape + (m,), inner: (..., m) -> (..., *out_shape)
    return np.einsum(_SUBSCRIPTS[matrix.ndim - 1], matrix, inner)


def constant(value):
    return Coefficient("constant", value)


def linear(matrix, offset=None):
    matrix = np.asarray(matrix, dtype=float)
    offset = np.zeros(matrix.shape[:-1]) if offset is None else offset
    return Coefficient("linear", offset, matrix)


def zero_drift(m):
    return constant(np.zeros(m))


def zero_diffusion(m, d):
    return constant(np.zeros((m, d)))


def check_dimensions(b, sigma, m, d):
    if b.out_shape != (m,):
        raise InputError(f"drift must map to R^{m}, got shape {b.out_shape}", field="b")
    if sigma.out_shape != (m, d):
        raise InputError(f"diffusion must map to R^({m}x{d}), got shape {sigma.out_shape}", field="sigma")
    for name, coef in (("b", b), ("sigma", sigma)):
        if coef.in_dim() not in (None, m):
            raise InputError(f"{name} takes points of dimension {coef.in_dim()}, expected {m}", field=name)
