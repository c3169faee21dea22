"""Driving vector fields V_0 (drift) and V_1..V_d of the RDE.

Each field maps ``(..., m)`` to ``(..., m)``; its Jacobian maps to
``(..., m, m)`` with ``DV[..., a, b] = d V^a / d y_b``; the optional Hessian maps
to ``(..., m, m, m)`` with ``H[..., a, b, c] = d^2 V^a / d y_b d y_c``.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ValidationError
from .diffusion import central_jacobian


@dataclass(frozen=True)
class VectorFieldSet:
    """Fields ``V_0..V_d`` on R^m (m = state dimension, d = driver dimension)."""

    d: int
    m: int
    fields: tuple
    jacobians: Optional[tuple] = None
    hessians: Optional[tuple] = None
    name: str = "custom"
    params: tuple = ()

    def __post_init__(self):
        if len(self.fields) != self.d + 1:
            raise ValidationError(f"need d + 1 = {self.d + 1} fields, got {len(self.fields)}")
        for attr in ("jacobians", "hessians"):
            val = getattr(self, attr)
            if val is not None and len(val) != self.d + 1:
                raise ValidationError(f"{attr} must have d + 1 entries")

    def V(self, i, y):
        return np.asarray(self.fields[i](np.asarray(y, dtype=float)), dtype=float)

    def DV(self, i, y):
        y = np.asarray(y, dtype=float)
        if self.jacobians is not None and self.jacobians[i] is not None:
            return np.asarray(self.jacobians[i](y), dtype=float)
        return central_jacobian(self.fields[i], y)

    def D2V(self, i, y):
        y = np.asarray(y, dtype=float)
        if self.hessians is not None and self.hessians[i] is not None:
            return np.asarray(self.hessians[i](y), dtype=float)
        return central_jacobian(lambda z: self.DV(i, z), y)

    def all_V(self, y):
        """Stack ``(..., d+1, m)`` of every field at y."""
        return np.stack([self.V(i, y) for i in range(self.d + 1)], axis=-2)

    def all_DV(self, y):
        return np.stack([self.DV(i, y) for i in range(self.d + 1)], axis=-3)

    def all_D2V(self, y):
        return np.stack([self.D2V(i, y) for i in range(self.d + 1)], axis=-4)

    def jacobian_consistency(self, probes, h=1e-5):
        """Max gap between supplied Jacobians and central differences of the fields."""
        probes = np.atleast_2d(np.asarray(probes, dtype=float))
        gap = 0.0
        for i in range(self.d + 1):
            fd = central_jacobian(self.fields[i], probes, h)
            gap = max(gap, float(np.abs(self.DV(i, probes) - fd).max()))
        return gap

    def sup_bounds(self, probes):
        """Sup norms of |V_i| and |DV_i| over probe points (diagnostics only)."""
        probes = np.atleast_2d(np.asarray(probes, dtype=float))
        v = self.all_V(probes)
        dv = self.all_DV(probes)
        return {
            "V": np.linalg.norm(v, axis=-1).max(axis=0).tolist(),
            "DV": np.linalg.norm(dv, axis=(-2, -1)).max(axis=0).tolist(),
        }


def _zeros_like_pt(y, m):
    return np.zeros(np.shape(y)[:-1] + (m,))


def _const_field(c):
    c = np.asarray(c, dtype=float)

    def f(y):
        return np.broadcast_to(c, np.shape(y)[:-1] + c.shape).copy()

    return f


def _zero_jac(m):
    return lambda y: np.zeros(np.shape(y)[:-1] + (m, m))


def _zero_hess(m):
    return lambda y: np.zeros(np.shape(y)[:-1] + (m, m, m))


def constant_fields(vectors, drift=None):
    """V_i(y) = vectors[i-1], V_0(y) = drift (zero by default)."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    d, m = vectors.shape
    v0 = np.zeros(m) if drift is None else np.asarray(drift, dtype=float)
    fields = (_const_field(v0),) + tuple(_const_field(v) for v in vectors)
    return VectorFieldSet(
        d, m, fields, (_zero_jac(m),) * (d + 1), (_zero_hess(m),) * (d + 1),
        name="constant", params=tuple(vectors.ravel()) + tuple(v0),
    )


def coordinate(d):
    """V_i = e_i, V_0 = 0: the solution is y_0 + X."""
    vs = constant_fields(np.eye(d))
    return VectorFieldSet(d, d, vs.fields, vs.jacobians, vs.hessians, name="coordinate")


def drift_only(d, c):
    """V_i = 0, V_0 = c."""
    vs = constant_fields(np.zeros((d, d)), drift=c)
    return VectorFieldSet(d, d, vs.fields, vs.jacobians, vs.hessians, name="drift", params=tuple(c))


def linear(matrices, drift_matrix=None):
    """V_i(y) = M_i y (i >= 1), V_0(y) = M_0 y."""
    mats = [np.asarray(M, dtype=float) for M in matrices]
    m = mats[0].shape[0]
    M0 = np.zeros((m, m)) if drift_matrix is None else np.asarray(drift_matrix, dtype=float)
    all_m = [M0] + mats

    def field(M):
        return lambda y: np.asarray(y, dtype=float) @ M.T

    def jac(M):
        return lambda y: np.broadcast_to(M, np.shape(y)[:-1] + (m, m)).copy()

    return VectorFieldSet(
        len(mats), m,
        tuple(field(M) for M in all_m),
        tuple(jac(M) for M in all_m),
        (_zero_hess(m),) * (len(mats) + 1),
        name="linear", params=tuple(np.concatenate([M.ravel() for M in all_m])),
    )


def scalar_linear(c=1.0):
    """d = m = 1, V_1(y) = c y, V_0 = 0."""
    vs = linear([[[c]]])
    return VectorFieldSet(1, 1, vs.fields, vs.jacobians, vs.hessians, name="scalar_linear", params=(c,))


def hormander_pair():
    """d = 2: V_1 = (1, 0), V_2 = (0, y_1), V_0 = 0; [V_1, V_2] = (0, 1)."""

    def v1(y):
        out = np.zeros(np.shape(y))
        out[..., 0] = 1.0
        return out

    def v2(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        out[..., 1] = y[..., 0]
        return out

    def dv2(y):
        out = np.zeros(np.shape(y)[:-1] + (2, 2))
        out[..., 1, 0] = 1.0
        return out

    return VectorFieldSet(
        2, 2, (lambda y: _zeros_like_pt(y, 2), v1, v2),
        (_zero_jac(2), _zero_jac(2), dv2), (_zero_hess(2),) * 3, name="hormander_pair",
    )


def degenerate_pair():
    """d = 2: V_1 = (1, 0), V_2 = 0, V_0 = 0; brackets never leave span{e_1}."""
    return VectorFieldSet(
        2, 2,
        (lambda y: _zeros_like_pt(y, 2), _const_field([1.0, 0.0]), lambda y: _zeros_like_pt(y, 2)),
        (_zero_jac(2),) * 3, (_zero_hess(2),) * 3, name="degenerate_pair",
    )


def trig_pair():
    """d = 2: V_1 = (1, 0), V_2 = (0, sin y_1), V_0 = 0.

    [V_1, V_2] = (0, cos y_1) and [V_1, [V_1, V_2]] = (0, -sin y_1), so the
    Hörmander condition holds at level 2 everywhere (level 1 where cos y_1 != 0).
    """

    def v2(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        out[..., 1] = np.sin(y[..., 0])
        return out

    def dv2(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1] + (2, 2))
        out[..., 1, 0] = np.cos(y[..., 0])
        return out

    def hv2(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1] + (2, 2, 2))
        out[..., 1, 0, 0] = -np.sin(y[..., 0])
        return out

    return VectorFieldSet(
        2, 2, (lambda y: _zeros_like_pt(y, 2), _const_field([1.0, 0.0]), v2),
        (_zero_jac(2), _zero_jac(2), dv2), (_zero_hess(2), _zero_hess(2), hv2), name="trig_pair",
    )


def custom(d, m, fields: Sequence[Callable], jacobians=None, hessians=None):
    """User fields; missing derivatives fall back to central differences."""
    return VectorFieldSet(
        d, m, tuple(fields),
        None if jacobians is None else tuple(jacobians),
        None if hessians is None else tuple(hessians),
        name="custom",
    )


CATALOG = {
    "coordinate": lambda d, params: coordinate(d),
    "hormander_pair": lambda d, params: hormander_pair(),
    "degenerate_pair": lambda d, params: degenerate_pair(),
    "trig_pair": lambda d, params: trig_pair(),
    "scalar_linear": lambda d, params: scalar_linear(*(params or [1.0])),
    "drift": lambda d, params: drift_only(d, params),
    "linear": lambda d, params: linear(
        np.asarray(params[d * d:], dtype=float).reshape(d, d, d),
        np.asarray(params[: d * d], dtype=float).reshape(d, d),
    ),
}


def fields_from_catalog(catalog_id, d, params=()):
    if catalog_id not in CATALOG:
        raise ValidationError(f"unknown vector-field catalog id {catalog_id!r}")
    fs = CATALOG[catalog_id](d, list(params))
    if fs.d != d:
        raise ValidationError(f"field set {catalog_id!r} has driver dimension {fs.d}, not {d}")
    return fs
