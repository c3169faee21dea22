"""Level-2 rough paths: midpoint lift, Chen/Hölder diagnostics, rough integrals, RDEs.

Conventions. ``XX[s,t][i, j] = int_s^t X^i_{s,r} dX^j_r``. A :class:`RoughPath`
stores ``XX0[k] = XX[0, t_k]`` and recovers any increment through Chen's
relation ``XX[s,t] = XX0[t] - XX0[s] - X_{0,s} (x) X_{s,t}``.
As elsewhere, arrays may carry leading batch axes.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BlowUpError, ValidationError
from .path_sim import COMPOSITION_TOL, monitored_inverse


def _lead_flat(a, tail):
    lead = a.shape[: a.ndim - tail]
    return np.ascontiguousarray(a.reshape((-1,) + a.shape[a.ndim - tail:])), lead


@dataclass(frozen=True)
class RoughPath:
    grid: np.ndarray
    X: np.ndarray  # (..., n+1, d)
    XX0: np.ndarray  # (..., n+1, d, d)
    step_areas: np.ndarray  # (..., n, d, d)  XX[t_k, t_{k+1}]
    alpha: float = 0.45
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.X.shape[-2] - 1

    @property
    def d(self):
        return self.X.shape[-1]

    @property
    def dt(self):
        return 1.0 / self.n

    @property
    def increments(self):
        return np.diff(self.X, axis=-2)

    def inc(self, s, t):
        return self.X[..., t, :] - self.X[..., s, :]

    def area_from_steps(self, s, t):
        """XX_{s,t} rebuilt from the stored per-step areas, independently of XX0."""
        P = _steps_prefix(self.X, self.step_areas)
        x0s = self.X[..., s, :] - self.X[..., np.zeros_like(s), :]
        return P[..., t, :, :] - P[..., s, :, :] - x0s[..., :, None] * self.inc(s, t)[..., None, :]

    def area(self, s, t):
        """XX_{s,t} for grid indices s <= t (scalars or broadcastable index arrays)."""
        x0s = self.X[..., s, :] - self.X[..., np.zeros_like(s), :]
        return (
            self.XX0[..., t, :, :] - self.XX0[..., s, :, :]
            - x0s[..., :, None] * self.inc(s, t)[..., None, :]
        )


def _steps_prefix(X, areas):
    x0 = X[..., :-1, :] - X[..., :1, :]
    dx = np.diff(X, axis=-2)
    contrib = areas + x0[..., :, None] * dx[..., None, :]
    out = np.zeros(X.shape + (X.shape[-1],))
    np.cumsum(contrib, axis=-3, out=out[..., 1:, :, :])
    return out


def _from_step_areas(grid, X, areas, alpha=0.45, meta=None):
    """Assemble XX0 from per-step areas by Chen's relation."""
    return RoughPath(grid, X, _steps_prefix(X, areas), areas, alpha, meta or {})


def _uniform(grid):
    g = np.asarray(grid, dtype=float)
    h = np.diff(g)
    return h.size > 0 and np.allclose(h, h[0], rtol=1e-9, atol=0.0)


def lift_values(values, base_stride, alpha=0.45):
    """Midpoint lift of raw sampled values (..., N+1, D) onto the stride grid."""
    values = np.asarray(values, dtype=float)
    N = values.shape[-2] - 1
    if base_stride < 1 or N % base_stride:
        raise ValidationError(f"stride {base_stride} does not divide N = {N}")
    Z, lead = _lead_flat(values, 2)
    areas = kernels.coarse_areas(Z, int(base_stride))
    areas = areas.reshape(lead + areas.shape[1:])
    Xc = values[..., ::base_stride, :]
    grid = np.linspace(0.0, 1.0, N // base_stride + 1)
    return _from_step_areas(grid, Xc, areas, alpha, {"base_stride": base_stride, "N_fine": N})


def midpoint_lift(path, base_stride=1, alpha=0.45):
    """Canonical midpoint (Stratonovich) lift of a sampled path.

    Level-2 increments over each coarse interval are the midpoint sums
    ``sum (X_{j}+X_{j+1})/2 - X_s) (x) (X_{j+1}-X_j)`` over the fine steps it
    contains; the symmetric part then equals ``X_{s,t} (x) X_{s,t} / 2``
    by telescoping.
    """
    if not _uniform(path.grid):
        raise ValidationError("midpoint_lift needs a uniform grid")
    return lift_values(path.values, base_stride, alpha)


def chen_defect(rp, triples):
    """Max Frobenius norm of XX_{s,t} - XX_{s,u} - XX_{u,t} - X_{s,u} (x) X_{u,t}.

    The left side is summed from the per-step areas and the right side is read
    from the stored XX0, so a storage inconsistency (e.g. a corrupted XX0
    entry at s or t) shows up in the defect.
    """
    tr = np.atleast_2d(np.asarray(triples, dtype=int))
    s, u, t = tr[:, 0], tr[:, 1], tr[:, 2]
    if np.any(s > u) or np.any(u > t):
        raise ValidationError("triples must satisfy s <= u <= t")
    lhs = rp.area_from_steps(s, t)
    rhs = rp.area(s, u) + rp.area(u, t) + rp.inc(s, u)[..., :, None] * rp.inc(u, t)[..., None, :]
    return float(np.linalg.norm(lhs - rhs, axis=(-2, -1)).max())


def symmetry_defect(rp, pairs):
    """Max Frobenius norm of Sym(XX_{s,t}) - X_{s,t} (x) X_{s,t} / 2."""
    pr = np.atleast_2d(np.asarray(pairs, dtype=int))
    s, t = pr[:, 0], pr[:, 1]
    A = rp.area(s, t)
    x = rp.inc(s, t)
    sym = 0.5 * (A + np.swapaxes(A, -1, -2))
    return float(np.linalg.norm(sym - 0.5 * x[..., :, None] * x[..., None, :], axis=(-2, -1)).max())


def level2_scale(rp):
    """Scale used for relative identity checks."""
    return max(1.0, float(np.abs(rp.XX0).max()), float(np.abs(rp.X).max()) ** 2)


# ---------------------------------------------------------------------------
# Hölder norms
# ---------------------------------------------------------------------------


@dataclass
class HolderReport:
    alpha: float
    norm_X_alpha: float
    norm_XX_2alpha: float
    rho_alpha: float
    mode: str


def dyadic_pairs(n):
    """All (s, t) index pairs of dyadic intervals of a grid with n = 2^L steps."""
    if n & (n - 1):
        raise ValidationError("dyadic mode needs a power-of-two grid")
    out = []
    size = n
    while size >= 1:
        starts = np.arange(0, n, size)
        out.append(np.stack([starts, starts + size], axis=1))
        size //= 2
    return np.concatenate(out)


def holder_norms(rp, alpha, mode="dyadic"):
    """Hölder constants of X (exponent alpha) and XX (2 alpha).

    ``mode="exact"`` scans every grid pair (O(n^2)); ``"dyadic"`` restricts to
    dyadic intervals, which is a lower bound. Only single (unbatched) paths.
    """
    if not 0 < alpha <= 0.5:
        raise ValidationError("alpha must lie in (0, 1/2]")
    if rp.X.ndim != 2:
        raise ValidationError("holder_norms expects an unbatched rough path")
    times = np.asarray(rp.grid, dtype=float)
    if mode == "exact":
        b1, b2 = kernels.pairwise_holder2(
            np.ascontiguousarray(rp.X), np.ascontiguousarray(rp.XX0), times, float(alpha)
        )
    elif mode == "dyadic":
        pr = dyadic_pairs(rp.n)
        s, t = pr[:, 0], pr[:, 1]
        dt = times[t] - times[s]
        b1 = float((np.linalg.norm(rp.inc(s, t), axis=-1) / dt**alpha).max())
        b2 = float((np.linalg.norm(rp.area(s, t), axis=(-2, -1)) / dt ** (2 * alpha)).max())
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return HolderReport(alpha, float(b1), float(b2), float(b1 + b2), mode)


def path_holder(values, times, alpha, mode="exact"):
    """Hölder constant of a sampled (n+1, D) path (flattening trailing axes)."""
    v = np.asarray(values, dtype=float)
    v = v.reshape(v.shape[0], -1)
    times = np.asarray(times, dtype=float)
    if mode == "exact":
        return float(kernels.pairwise_holder(np.ascontiguousarray(v), times, float(alpha)))
    pr = dyadic_pairs(v.shape[0] - 1)
    s, t = pr[:, 0], pr[:, 1]
    return float((np.linalg.norm(v[t] - v[s], axis=-1) / (times[t] - times[s]) ** alpha).max())


# ---------------------------------------------------------------------------
# Controlled paths and rough integration
# ---------------------------------------------------------------------------


@dataclass
class ControlledPath:
    grid: np.ndarray
    Y: np.ndarray  # (..., n+1, *value_shape)
    Yp: np.ndarray  # (..., n+1, *value_shape, d)
    remainder_norm_2a: float = float("nan")
    aux: dict = field(default_factory=dict)


def remainder_norm(Y, Yp, rp, alpha=None, mode="dyadic"):
    """2 alpha-Hölder constant of R_{s,t} = Y_{s,t} - Y'_s X_{s,t} (single path)."""
    alpha = rp.alpha if alpha is None else alpha
    Y = np.asarray(Y)
    n = Y.shape[0] - 1
    times = np.asarray(rp.grid)
    if mode == "dyadic":
        pr = dyadic_pairs(n)
    else:
        s, t = np.triu_indices(n + 1, 1)
        pr = np.stack([s, t], 1)
    s, t = pr[:, 0], pr[:, 1]
    R = Y[t] - Y[s] - np.einsum("p...i,pi->p...", Yp[s], rp.inc(s, t))
    R = R.reshape(R.shape[0], -1)
    return float((np.linalg.norm(R, axis=-1) / (times[t] - times[s]) ** (2 * alpha)).max())


def compensated_increments(Yv, Yp, dX, areas):
    """Per-step increments ``Y_k X_{k,k+1} + Y'_k XX_{k,k+1}``.

    Yv: (..., n, m, d) integrand values at left endpoints;
    Yp: (..., n, m, d, d) with Yp[..., i, j] = derivative of column i along X^j;
    dX: (..., n, d); areas: (..., n, d, d).
    """
    out = np.einsum("...mi,...i->...m", Yv, dX)
    if Yp is not None:
        out = out + np.einsum("...mij,...ji->...m", Yp, areas)
    return out


def rough_integral(Y, rp, record_remainder=True):
    """Compensated Riemann sums of a controlled, linear-map-valued integrand.

    ``Y.Y`` has shape (..., n+1, m, d) and ``Y.Yp`` (..., n+1, m, d, d). The
    output is m-valued with Gubinelli derivative equal to the integrand.
    """
    if Y.Y.shape[-3] != rp.n + 1 or Y.Y.shape[-1] != rp.d:
        raise ValidationError("integrand grid or dimension does not match the rough path")
    if not np.allclose(np.asarray(Y.grid), np.asarray(rp.grid)):
        raise ValidationError("grid mismatch")
    inc = compensated_increments(
        Y.Y[..., :-1, :, :], None if Y.Yp is None else Y.Yp[..., :-1, :, :, :],
        rp.increments, rp.step_areas,
    )
    Z = np.zeros(inc.shape[:-2] + (rp.n + 1, inc.shape[-1]))
    np.cumsum(inc, axis=-2, out=Z[..., 1:, :])
    out = ControlledPath(rp.grid, Z, Y.Y)
    if record_remainder and Z.ndim == 2:
        out.remainder_norm_2a = remainder_norm(Z, Y.Y, rp)
    return out


# ---------------------------------------------------------------------------
# RDE solver
# ---------------------------------------------------------------------------


def solve_rde(fields, rp, y0, record_remainder=True):
    """Davie scheme for dY = sum_i V_i(Y) dX^i + V_0(Y) dt.

    ``Y_{k+1} = Y_k + V_i X^i + (DV_i V_j) XX^{ji} + V_0 dt``. The returned
    controlled path carries the field values and Jacobians at every grid
    point in ``aux`` (reused by the Jacobian and Malliavin stages).
    """
    if fields.d != rp.d:
        raise ValidationError(f"field driver dimension {fields.d} != rough path dimension {rp.d}")
    n, d, m = rp.n, rp.d, fields.m
    dt = rp.dt
    dX = rp.increments
    areas = rp.step_areas
    lead = rp.X.shape[:-2]
    Y = np.empty(lead + (n + 1, m))
    Y[..., 0, :] = np.broadcast_to(np.asarray(y0, dtype=float), lead + (m,))
    Vs = np.empty(lead + (n + 1, d + 1, m))
    DVs = np.empty(lead + (n + 1, d + 1, m, m))
    cur = Y[..., 0, :]
    for k in range(n + 1):
        V = fields.all_V(cur)
        DV = fields.all_DV(cur)
        Vs[..., k, :, :] = V
        DVs[..., k, :, :, :] = DV
        if k == n:
            break
        # sum_{i,j} DV_i V_j XX^{ji}
        second = np.einsum("...iab,...jb,...ji->...a", DV[..., 1:, :, :], V[..., 1:, :], areas[..., k, :, :])
        nxt = (
            cur
            + np.einsum("...ia,...i->...a", V[..., 1:, :], dX[..., k, :])
            + second
            + V[..., 0, :] * dt
        )
        if not np.all(np.isfinite(nxt)):
            raise BlowUpError(f"non-finite RDE state at step {k + 1}", step=k + 1)
        Y[..., k + 1, :] = nxt
        cur = nxt
    Yp = np.swapaxes(Vs[..., 1:, :], -1, -2)  # (..., n+1, m, d): column i is V_i
    out = ControlledPath(rp.grid, Y, Yp, aux={"V": Vs, "DV": DVs})
    if record_remainder and Y.ndim == 2:
        out.remainder_norm_2a = remainder_norm(Y, Yp, rp)
    return out


@dataclass(frozen=True)
class JacobianPair:
    J_fwd: np.ndarray  # (..., n+1, m, m)  J^Y_{t<-0}
    J_inv: np.ndarray  # (..., n+1, m, m)  J^Y_{0<-t}
    defect: object
    sde_defect: object
    inverse_method: str
    steps: np.ndarray  # forward step matrices (..., n, m, m)


def _second_derivative_terms(fields, Y, Vs, DVs):
    """``D2V_i[V_j]`` for i, j >= 1 at every grid point: (..., n+1, d, d, m, m)."""
    H = np.stack([fields.D2V(i, Y) for i in range(1, fields.d + 1)], axis=-4)  # (..., n+1, i, a, b, c)
    return np.einsum("...iabc,...jc->...ijab", H, Vs[..., 1:, :])


def jacobian_steps(fields, rp, Y):
    """Davie step matrices for J^Y and for its inverse equation.

    forward  M_k = I + DV_i X^i + (D2V_i[V_j] + DV_i DV_j) XX^{ji} + DV_0 dt
    inverse  N_k = I - DV_i X^i + (DV_j DV_i - D2V_i[V_j]) XX^{ji} - DV_0 dt
    """
    m = fields.m
    Vs, DVs = Y.aux["V"], Y.aux["DV"]
    D2 = _second_derivative_terms(fields, Y.Y, Vs, DVs)[..., :-1, :, :, :, :]
    DV = DVs[..., :-1, 1:, :, :]  # (..., n, i, a, b)
    DV0 = DVs[..., :-1, 0, :, :]
    dX = rp.increments
    areaT = np.swapaxes(rp.step_areas, -1, -2)  # [i, j] = XX^{ji}
    prodij = np.einsum("...iab,...jbc->...ijac", DV, DV)  # DV_i DV_j
    first = np.einsum("...iab,...i->...ab", DV, dX)
    fwd2 = np.einsum("...ijab,...ij->...ab", D2 + prodij, areaT)
    inv2 = np.einsum("...ijab,...ij->...ab", np.swapaxes(prodij, -3, -4) - D2, areaT)
    eye = np.eye(m)
    M = eye + first + fwd2 + DV0 * rp.dt
    Ninv = eye - first + inv2 - DV0 * rp.dt
    return M, Ninv


def solve_jacobian_rde(fields, rp, Y, tol=COMPOSITION_TOL):
    """J^Y_{t<-0} and J^Y_{0<-t} by the Davie scheme on the same lift."""
    M, Ninv = jacobian_steps(fields, rp, Y)
    J_fwd, J_inv, defect, sde_defect, method = monitored_inverse(M, Ninv, tol, "J^Y")
    return JacobianPair(J_fwd, J_inv, defect, sde_defect, method, M)
