"""Diffusion coefficient fields a(x), their square roots and differentials.

All coefficient callables are batched: a point array of shape ``(..., d)`` maps
to ``(..., d, d)``. Derivative tensors use the layout ``T[..., i, j, k] =
d/dx_k T_ij``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import EllipticityError, NumericalDegradationError, ValidationError

DRIFT_CONVENTIONS = ("half_divergence", "full_divergence")
CONTRACTIONS = ("left_contract", "right_contract")


def default_fd_step(x):
    """Central-difference step ``1e-5 * (1 + |x|_inf)`` (broadcast over batch)."""
    x = np.asarray(x, dtype=float)
    return 1e-5 * (1.0 + np.max(np.abs(x), axis=-1, keepdims=True))


def central_jacobian(f, x, h=None):
    """Batched central differences: returns ``J[..., *out_shape, k]``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    if h is None:
        h = default_fd_step(x)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape[:-1] + (1,))
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        step = h * e
        fp = np.asarray(f(x + step))
        fm = np.asarray(f(x - step))
        hk = h[..., 0].reshape(h.shape[:-1] + (1,) * (fp.ndim - x.ndim + 1))
        cols.append((fp - fm) / (2.0 * hk))
    return np.stack(cols, axis=-1)


def _sym_eig(m):
    w, q = np.linalg.eigh(m)
    return w, q


def sqrtm_psd(m):
    """Symmetric square root without validation (hot path)."""
    w, q = _sym_eig(m)
    s = np.sqrt(np.clip(w, 0.0, None))
    r = (q * s[..., None, :]) @ np.swapaxes(q, -1, -2)
    return 0.5 * (r + np.swapaxes(r, -1, -2))


def matrix_sqrt(m, lam=None):
    """Unique symmetric positive-definite square root of an SPD matrix.

    Parameters
    ----------
    m : array_like, shape (..., d, d)
        Symmetric positive-definite matrix or stack of them.
    lam : float, optional
        Declared lower ellipticity constant. Eigenvalues below
        ``lam * (1 - 1e-8)`` raise :class:`EllipticityError`. Without it the
        matrix only has to be positive definite.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValidationError(f"expected square matrices, got shape {m.shape}")
    scale = max(float(np.abs(m).max()), np.finfo(float).tiny)
    asym = float(np.abs(m - np.swapaxes(m, -1, -2)).max()) / scale
    if asym > 1e-12:
        raise ValidationError(f"matrix is not symmetric (relative asymmetry {asym:.3e})")
    w, q = _sym_eig(m)
    wmin = float(w.min())
    floor = 0.0 if lam is None else lam * (1.0 - 1e-8)
    if wmin < floor or (lam is None and wmin <= 0.0):
        raise EllipticityError(
            f"smallest eigenvalue {wmin:.6g} below ellipticity floor {floor:.6g}"
        )
    r = (q * np.sqrt(w)[..., None, :]) @ np.swapaxes(q, -1, -2)
    return 0.5 * (r + np.swapaxes(r, -1, -2))


def sylvester_sqrt_differential(a, da):
    """Solve ``A dA_k + dA_k A = da_k`` for every k in the eigenbasis of a.

    a : (..., d, d) SPD, da : (..., d, d, d) with da[..., i, j, k].
    Returns dA with the same layout.
    """
    w, q = _sym_eig(a)
    s = np.sqrt(np.clip(w, 0.0, None))
    denom = s[..., :, None] + s[..., None, :]
    qt = np.swapaxes(q, -1, -2)
    # rotate each slice k into the eigenbasis
    dak = np.moveaxis(da, -1, -3)  # (..., k, i, j)
    rot = qt[..., None, :, :] @ dak @ q[..., None, :, :]
    sol = rot / denom[..., None, :, :]
    back = q[..., None, :, :] @ sol @ qt[..., None, :, :]
    return np.moveaxis(back, -3, -1)


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficient field of the generator ``1/2 sum d_i (a_ij d_j)``.

    ``a`` is required; ``da``, ``sqrt_a`` and ``dsqrt_a`` are optional closed
    forms. Missing derivatives fall back to central differences with the
    default step, missing square roots to a symmetric eigendecomposition.
    """

    d: int
    a: Callable
    lam: float
    Lam: float
    catalog_id: str = "custom"
    params: tuple = ()
    da: Optional[Callable] = None
    sqrt_a: Optional[Callable] = None
    dsqrt_a: Optional[Callable] = None
    convention: str = "half_divergence"
    constant: bool = False
    drift: Optional[Callable] = None
    drift_jac: Optional[Callable] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError("dimension must be positive")
        if not (0 < self.lam <= self.Lam):
            raise ValidationError(f"need 0 < lambda <= Lambda, got {self.lam}, {self.Lam}")
        if self.convention not in DRIFT_CONVENTIONS:
            raise ValidationError(f"unknown drift convention {self.convention!r}")

    # -- evaluation -------------------------------------------------------
    def coeff(self, x):
        return np.asarray(self.a(np.asarray(x, dtype=float)), dtype=float)

    def dcoeff(self, x):
        x = np.asarray(x, dtype=float)
        if self.da is not None:
            return np.asarray(self.da(x), dtype=float)
        return central_jacobian(self.a, x)

    def A(self, x):
        x = np.asarray(x, dtype=float)
        if self.sqrt_a is not None:
            return np.asarray(self.sqrt_a(x), dtype=float)
        return sqrtm_psd(self.coeff(x))

    def dA(self, x):
        x = np.asarray(x, dtype=float)
        if self.dsqrt_a is not None:
            return np.asarray(self.dsqrt_a(x), dtype=float)
        return sylvester_sqrt_differential(self.coeff(x), self.dcoeff(x))

    def B(self, x, convention=None):
        if self.drift is not None:
            return np.asarray(self.drift(np.asarray(x, dtype=float)), dtype=float)
        return drift_from_a(self, x, convention)

    def DB(self, x, convention=None):
        x = np.asarray(x, dtype=float)
        if self.drift_jac is not None:
            return np.asarray(self.drift_jac(x), dtype=float)
        if self.constant and self.drift is None:
            return np.zeros(x.shape + (self.d,))
        return central_jacobian(lambda y: self.B(y, convention), x)

    def with_convention(self, convention):
        from dataclasses import replace

        return replace(self, convention=convention)


def sqrt_differential(spec, x, method="sylvester", h=None, check=True):
    """Differential of the matrix square root, ``dA[..., i, j, k] = d_k A_ij(x)``.

    ``method="sylvester"`` solves ``A dA_k + dA_k A = d_k a`` exactly in the
    eigenbasis of ``a``; ``method="finite_diff"`` takes central differences of
    :func:`matrix_sqrt` with step ``h``.
    """
    x = np.asarray(x, dtype=float)
    if method == "sylvester":
        a = spec.coeff(x)
        da = spec.dcoeff(x)
        dA = sylvester_sqrt_differential(a, da)
        if check:
            A = sqrtm_psd(a)
            dAk = np.moveaxis(dA, -1, -3)
            res = A[..., None, :, :] @ dAk + dAk @ A[..., None, :, :] - np.moveaxis(da, -1, -3)
            scale = 1.0 + float(np.abs(da).max())
            if float(np.abs(res).max()) > 1e-9 * scale:
                raise NumericalDegradationError(
                    f"Sylvester residual {float(np.abs(res).max()):.3e} exceeds tolerance"
                )
        return dA
    if method == "finite_diff":
        return central_jacobian(lambda y: matrix_sqrt(spec.coeff(y)), x, h)
    raise ValidationError(f"unknown method {method!r}")


def drift_from_a(spec, x, convention=None):
    """Drift ``B_j = c * sum_i d_i a_ij`` with c = 1/2 (half) or 1 (full)."""
    conv = convention or spec.convention
    if conv not in DRIFT_CONVENTIONS:
        raise ValidationError(f"unknown drift convention {conv!r}")
    x = np.asarray(x, dtype=float)
    if spec.constant:
        return np.zeros(x.shape)
    da = spec.dcoeff(x)
    div = np.einsum("...iji->...j", da)
    return 0.5 * div if conv == "half_divergence" else div


# ---------------------------------------------------------------------------
# Assumption checkers
# ---------------------------------------------------------------------------


@dataclass
class EllipticityReport:
    min_rayleigh: float
    max_rayleigh: float
    passed: bool
    argmin: tuple
    argmax: tuple


def check_ellipticity(spec, probes, directions):
    """Min/max Rayleigh quotient of a(x) over probe points and directions."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    if probes.size == 0 or dirs.size == 0:
        raise ValidationError("probe set and direction set must be nonempty")
    a = spec.coeff(probes)  # (P, d, d)
    num = np.einsum("vi,pij,vj->pv", dirs, a, dirs)
    rq = num / np.einsum("vi,vi->v", dirs, dirs)[None, :]
    imin = np.unravel_index(np.argmin(rq), rq.shape)
    imax = np.unravel_index(np.argmax(rq), rq.shape)
    lo, hi = float(rq[imin]), float(rq[imax])
    ok = lo >= spec.lam * (1 - 1e-8) and hi <= spec.Lam * (1 + 1e-8)
    return EllipticityReport(
        lo, hi, ok,
        (probes[imin[0]].tolist(), dirs[imin[1]].tolist()),
        (probes[imax[0]].tolist(), dirs[imax[1]].tolist()),
    )


@dataclass
class Assumption3Report:
    estimated_CJ: float
    argmin_point: list
    argmin_direction: list
    convention: str
    a_constant: bool


def contraction_gram(dA, convention="left_contract"):
    """Gram matrix G with ``|v^T dA|^2 = v^T G v`` for the chosen contraction."""
    if convention == "left_contract":
        return np.einsum("...ijk,...ljk->...il", dA, dA)
    if convention == "right_contract":
        return np.einsum("...ijk,...ilk->...jl", dA, dA)
    raise ValidationError(f"unknown contraction {convention!r}")


def check_assumption3(spec, probes, directions=None, convention="left_contract"):
    """Estimate ``C_J = min |v^T dA(x)|^2`` over probes and unit v.

    Without ``directions`` the inner minimum over the sphere is exact (smallest
    eigenvalue of the contraction Gram matrix); with ``directions`` it is a
    scan over the supplied directions.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.size == 0:
        raise ValidationError("probe set must be nonempty")
    dA = spec.dA(probes)
    G = contraction_gram(dA, convention)
    if directions is None:
        w, q = np.linalg.eigh(G)
        vals = w[:, 0]
        p = int(np.argmin(vals))
        v = q[p, :, 0]
        cj = float(max(vals[p], 0.0))
    else:
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        vals = np.einsum("vi,pil,vl->pv", dirs, G, dirs)
        p, j = np.unravel_index(np.argmin(vals), vals.shape)
        v = dirs[j]
        cj = float(max(vals[p, j], 0.0))
    const = spec.constant or float(np.abs(dA).max()) == 0.0
    return Assumption3Report(cj, probes[p].tolist(), np.asarray(v).tolist(), convention, const)


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


def _const_spec(d, mat, catalog_id, params):
    mat = np.array(mat, dtype=float)
    w = np.linalg.eigvalsh(mat)
    if w.min() <= 0:
        raise ValidationError("constant coefficient must be positive definite")
    root = matrix_sqrt(mat)

    def a(x):
        return np.broadcast_to(mat, np.shape(x)[:-1] + (d, d)).copy()

    def da(x):
        return np.zeros(np.shape(x)[:-1] + (d, d, d))

    def sqrt_a(x):
        return np.broadcast_to(root, np.shape(x)[:-1] + (d, d)).copy()

    return DiffusionSpec(
        d, a, float(w.min()), float(w.max()), catalog_id, tuple(params),
        da=da, sqrt_a=sqrt_a, dsqrt_a=da, constant=True,
    )


def constant(d, c=1.0):
    """a(x) = c I, or a fixed SPD matrix when ``c`` is a d x d array."""
    c_arr = np.asarray(c, dtype=float)
    if c_arr.ndim == 0:
        return _const_spec(d, float(c_arr) * np.eye(d), "constant", (float(c_arr),))
    return _const_spec(d, c_arr.reshape(d, d), "constant", tuple(c_arr.ravel()))


def identity(d):
    return _const_spec(d, np.eye(d), "identity", ())


def trig_perturbed(d, c0=2.0, c1=1.0):
    """a(x) = c0 I + c1 S(sin x),  S(u) = (u 1^T + 1 u^T) / (2d).

    ||S(u)|| <= 1 for |u_i| <= 1, so lambda = c0 - |c1| and Lambda = c0 + |c1|.
    For d = 1 this is a(x) = c0 + c1 sin(x).
    """
    if not c0 > abs(c1):
        raise ValidationError("trig_perturbed needs c0 > |c1|")
    ones = np.ones(d)
    eye = np.eye(d)

    def a(x):
        u = np.sin(x)
        S = (u[..., :, None] * ones + ones[:, None] * u[..., None, :]) / (2 * d)
        return c0 * eye + c1 * S

    def da(x):
        c = np.cos(x)  # (..., d)
        # d_k S_ij = (delta_ik c_k + delta_jk c_k) / (2d)
        t = np.einsum("ik,...k->...ik", eye, c)[..., :, None, :] * ones[None, :, None]
        t = t + np.swapaxes(t, -2, -3)
        return c1 * t / (2 * d)

    return DiffusionSpec(
        d, a, c0 - abs(c1), c0 + abs(c1), "trig_perturbed", (c0, c1), da=da,
    )


def rotating(c0=2.0, c1=1.0, omega=(1.0, 1.0)):
    """d = 2 field a(x) = c0 I + c1 R(w.x), R(p) = [[cos p, sin p], [sin p, -cos p]].

    R is a symmetric reflection, so a has eigenvalues c0 +- c1 everywhere and
    A = alpha I + beta R with alpha^2 + beta^2 = c0, 2 alpha beta = c1. Its
    differential dA_k = beta w_k R'(w.x) has R' orthogonal, hence
    |v^T dA|^2 = beta^2 |w|^2 |v|^2 for every x.
    """
    if not c0 > abs(c1):
        raise ValidationError("rotating needs c0 > |c1|")
    om = np.asarray(omega, dtype=float).reshape(2)
    sp, sm = np.sqrt(c0 + c1), np.sqrt(c0 - c1)
    alpha, beta = 0.5 * (sp + sm), 0.5 * (sp - sm)
    eye = np.eye(2)

    def R(p):
        c, s = np.cos(p), np.sin(p)
        return np.stack([np.stack([c, s], -1), np.stack([s, -c], -1)], -2)

    def dR(p):
        c, s = np.cos(p), np.sin(p)
        return np.stack([np.stack([-s, c], -1), np.stack([c, s], -1)], -2)

    def phase(x):
        return np.asarray(x, dtype=float) @ om

    def a(x):
        return c0 * eye + c1 * R(phase(x))

    def da(x):
        return c1 * dR(phase(x))[..., None] * om

    def sqrt_a(x):
        return alpha * eye + beta * R(phase(x))

    def dsqrt_a(x):
        return beta * dR(phase(x))[..., None] * om

    return DiffusionSpec(
        2, a, c0 - abs(c1), c0 + abs(c1), "rotating", (c0, c1, float(om[0]), float(om[1])),
        da=da, sqrt_a=sqrt_a, dsqrt_a=dsqrt_a,
        meta={"C_J_exact": float(beta**2 * om @ om)},
    )


def tanh_1d(c0=2.0, c1=1.0, width=1.0):
    """d = 1, a(x) = c0 + c1 tanh(x / width): strictly monotone, a' -> 0 at infinity."""
    if not c0 > abs(c1):
        raise ValidationError("tanh_1d needs c0 > |c1|")

    def a(x):
        return (c0 + c1 * np.tanh(np.asarray(x)[..., :1] / width))[..., None]

    def da(x):
        z = np.asarray(x)[..., :1] / width
        return (c1 / width / np.cosh(z) ** 2)[..., None, None]

    return DiffusionSpec(1, a, c0 - abs(c1), c0 + abs(c1), "tanh_1d", (c0, c1, width), da=da)


def custom_sqrt(d, sqrt_a, dsqrt_a, lam=1.0, Lam=1.0, drift=None, drift_jac=None):
    """Spec built from a square-root field directly (testing hook).

    ``drift`` / ``drift_jac`` override B and DB; ellipticity is not enforced.
    """

    def a(x):
        A = sqrt_a(x)
        return A @ A

    return DiffusionSpec(
        d, a, lam, Lam, "custom_sqrt", (), sqrt_a=sqrt_a, dsqrt_a=dsqrt_a,
        drift=drift, drift_jac=drift_jac,
    )


CATALOG = {
    "identity": lambda d, params: identity(d),
    "constant": lambda d, params: constant(d, params[0] if len(params) == 1 else np.asarray(params)),
    "trig_perturbed": lambda d, params: trig_perturbed(d, *params),
    "rotating": lambda d, params: rotating(params[0], params[1], params[2:4]) if params else rotating(),
    "tanh_1d": lambda d, params: tanh_1d(*params),
}


def from_catalog(catalog_id, d, params=(), convention="half_divergence"):
    if catalog_id not in CATALOG:
        raise ValidationError(f"unknown diffusion catalog id {catalog_id!r}")
    spec = CATALOG[catalog_id](d, list(params))
    if spec.d != d:
        raise ValidationError(f"catalog entry {catalog_id!r} has dimension {spec.d}, not {d}")
    return spec.with_convention(convention)
