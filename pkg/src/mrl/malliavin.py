"""Malliavin derivatives of X and Y on a grid triangle and the Malliavin matrices.

Derivatives are stored in factored form. A :class:`MalliavinField` holds an
optional outer matrix path ``O`` and a list of separable terms ``(L, R)`` with

    D_r Z_t = O[t] @ sum_terms L[t] @ R[r]     (r <= t),   0 otherwise,

which is O(n) memory instead of a dense O(n^2) triangle. For X this is
``J_{t<-0} (J_{0<-r} A(X_r))``. For Y (F(s) = J^Y_{0<-s}[V_1..V_d](Y_s),
H(t) = int_0^t F dJ^X_{s<-0}, G(r) = J^X_{0<-r} A(X_r)) it is

    D_r Y_t = J^Y_{t<-0} [ F(r) A(X_r) + (H(t) - H(r)) G(r) ],

where the first term is the jump of s -> D_r X_s at s = r and the second the
rough integral against the flow afterwards.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NumericalDegradationError, ValidationError
from .path_sim import matrix_path
from .rough_core import compensated_increments, lift_values


@dataclass
class MalliavinField:
    grid: np.ndarray
    kind: str  # "of_X" or "of_Y"
    outer: np.ndarray  # (..., n+1, m, m) or None
    terms: list  # [(L (..., n+1, m, k), R (..., n+1, k, d))]
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.grid) - 1

    def reduced(self, t, r):
        """``sum L[t] R[r]`` (the quantity inside the outer matrix), no masking."""
        out = 0.0
        for L, R in self.terms:
            out = out + L[..., t, :, :] @ R[..., r, :, :]
        return out

    def value(self, t, r):
        """D_r Z_t for grid indices (broadcastable arrays allowed); zero when r > t."""
        t = np.asarray(t)
        r = np.asarray(r)
        red = self.reduced(t, r)
        val = red if self.outer is None else self.outer[..., t, :, :] @ red
        mask = (r <= t)[..., None, None]
        return np.where(mask, val, 0.0)

    def dense(self):
        """Full triangle (..., n+1 [t], n+1 [r], m, d), zero above the diagonal."""
        idx = np.arange(self.n + 1)
        return self.value(idx[:, None], idx[None, :])

    def at_time(self, t):
        """Rows r = 0..n of D_r Z_t, shape (..., n+1, m, d)."""
        return self.value(np.full(self.n + 1, t), np.arange(self.n + 1))


# ---------------------------------------------------------------------------
# X
# ---------------------------------------------------------------------------


def malliavin_X(flow, spec, stride=1):
    """D_r X_t = J_{t<-0} J_{0<-r} A(X_r) on the stride sub-grid of the flow."""
    Jf = flow.J_fwd[..., ::stride, :, :]
    Ji = flow.J_inv[..., ::stride, :, :]
    Xc = flow.X.values[..., ::stride, :]
    R = Ji @ spec.A(Xc)
    d = Xc.shape[-1]
    eye = np.broadcast_to(np.eye(d), Jf.shape)
    grid = np.asarray(flow.X.grid)[::stride]
    return MalliavinField(grid, "of_X", Jf, [(eye, R)], {"stride": stride})


# ---------------------------------------------------------------------------
# Bracket arrays from field values, Jacobians and Hessians
# ---------------------------------------------------------------------------


def bracket_arrays(V, DV, H):
    """First and second Lie brackets of all field pairs at each point.

    V (..., K, m), DV (..., K, m, m), H (..., K, m, m, m) for K fields.
    Returns br[..., j, i] = [V_j, V_i], its Jacobian Dbr[..., j, i] and
    sec[..., l, j, i] = [V_l, [V_j, V_i]]; [V, W] = DW V - DV W.
    """
    DVi_Vj = np.einsum("...iab,...jb->...jia", DV, V)  # DV_i V_j at [j, i]
    br = DVi_Vj - np.swapaxes(DVi_Vj, -2, -3)
    # d/dy_c of (DV_i V_j)_a = H_i[a,b,c] V_j^b + DV_i[a,b] DV_j[b,c]
    t = np.einsum("...iabc,...jb->...jiac", H, V) + np.einsum("...iab,...jbc->...jiac", DV, DV)
    Dbr = t - np.swapaxes(t, -3, -4)
    sec = np.einsum("...jiab,...lb->...ljia", Dbr, V) - np.einsum("...lab,...jib->...ljia", DV, br)
    return br, Dbr, sec


def _field_arrays(fields, Y):
    V, DV = Y.aux["V"], Y.aux["DV"]
    H = fields.all_D2V(Y.Y)
    return V, DV, H


# ---------------------------------------------------------------------------
# Y
# ---------------------------------------------------------------------------


def _stride_of(rp, flowX):
    N = flowX.X.values.shape[-2] - 1
    if N % rp.n:
        raise ValidationError("rough path grid is not a sub-grid of the flow grid")
    return N // rp.n


def integrand_F(fields, Y, JY):
    """F[..., s, :, i] = J^Y_{0<-s} V_i(Y_s) and its X-derivatives.

    Fp[..., s, :, i, l] = J^Y_{0<-s} [V_l, V_i](Y_s), the Gubinelli derivative
    of column i along X^l.
    """
    V, DV, H = _field_arrays(fields, Y)
    Ji = JY.J_inv
    F = np.einsum("...ab,...ib->...ai", Ji, V[..., 1:, :])
    br, _, _ = bracket_arrays(V, DV, H)
    Fp = np.einsum("...ab,...lib->...ail", Ji, br[..., 1:, 1:, :])
    return F, Fp


def malliavin_Y(fields, rp, Y, JY, flowX, spec):
    """Factored D_r Y_t on the rough-path grid.

    H is accumulated by compensated sums against the flow J^X_{.<-0}, with the
    cross areas taken from a joint midpoint lift of (X, vec J^X) on the fine
    grid of the flow.
    """
    if rp.d != flowX.X.d or rp.d != fields.d:
        raise ValidationError("dimension mismatch between rough path, flow and fields")
    stride = _stride_of(rp, flowX)
    d, m = rp.d, fields.m
    F, Fp = integrand_F(fields, Y, JY)
    cross, dJ, Jc = _joint_cross_areas(flowX.X.values, flowX.J_fwd, stride)
    # dH_k = F_k dJ_k + sum_{i,l} Fp[k, :, i, l] A(X^l, J_{i.})_k
    dH = np.einsum("...ai,...ij->...aj", F[..., :-1, :, :], dJ) + np.einsum(
        "...ail,...lij->...aj", Fp[..., :-1, :, :, :], cross
    )
    H = np.zeros(F.shape[:-3] + (rp.n + 1, m, d))
    np.cumsum(dH, axis=-3, out=H[..., 1:, :, :])
    Xc = flowX.X.values[..., ::stride, :]
    A = spec.A(Xc)
    G = flowX.J_inv[..., ::stride, :, :] @ A
    R1 = F @ A - H @ G
    eye = np.broadcast_to(np.eye(m), JY.J_fwd.shape)
    return MalliavinField(
        rp.grid, "of_Y", JY.J_fwd, [(eye, R1), (H, G)],
        {"stride": stride, "F": F, "Fp": Fp, "H": H, "G": G, "A": A},
    )


def _joint_cross_areas(Xf, Jf, stride):
    """Coarse increments of J and cross areas int X^l dJ_{ij} from a joint lift."""
    d = Xf.shape[-1]
    Z = np.concatenate([Xf, Jf.reshape(Jf.shape[:-2] + (d * d,))], axis=-1)
    rpz = lift_values(Z, stride)
    cross = rpz.step_areas[..., :d, d:].reshape(rpz.step_areas.shape[:-2] + (d, d, d))
    Jc = Jf[..., ::stride, :, :]
    return cross, np.diff(Jc, axis=-3), Jc


def factorized_vs_direct_check(fields, rp, Y, JY, flowX, spec, r_samples, DY=None):
    """Max relative gap between factored K_r(t) and a per-r direct rough integral.

    For each sampled coarse index r, the path s -> D_r X_s = T[s, r] A(X_r) is
    rebuilt from the forward Euler step matrices (no inverse flow involved),
    lifted jointly with X from r onward, and integrated against F by
    compensated sums. Single (unbatched) path.
    """
    if DY is None:
        DY = malliavin_Y(fields, rp, Y, JY, flowX, spec)
    stride = DY.meta["stride"]
    F, Fp, A = DY.meta["F"], DY.meta["Fp"], DY.meta["A"]
    n = rp.n
    Xf = flowX.X.values
    d = Xf.shape[-1]
    num, den = 0.0, 0.0
    for r in np.atleast_1d(np.asarray(r_samples, dtype=int)):
        R = r * stride
        T = matrix_path(flowX.steps[..., R:, :, :])  # (N-R+1, d, d) = T[s, R]
        D = T @ A[..., r, :, :]
        cross, dD, _ = _joint_cross_areas(Xf[..., R:, :], D, stride)
        inc = np.einsum("...ai,...ij->...aj", F[..., r:-1, :, :], dD) + np.einsum(
            "...ail,...lij->...aj", Fp[..., r:-1, :, :, :], cross
        )
        direct = np.empty((n - r + 1,) + inc.shape[-2:])
        direct[0] = F[..., r, :, :] @ A[..., r, :, :]
        direct[1:] = direct[0] + np.cumsum(inc, axis=-3)
        ts = np.arange(r, n + 1)
        fact = DY.reduced(ts, np.full_like(ts, r))
        num = max(num, float(np.abs(fact - direct).max()))
        den = max(den, float(np.abs(direct).max()))
    return num / max(den, np.finfo(float).tiny)


# ---------------------------------------------------------------------------
# Malliavin matrices
# ---------------------------------------------------------------------------


@dataclass
class MalliavinMatrixPair:
    C: np.ndarray
    Gamma: np.ndarray
    lambda_min_C: object
    lambda_min_Gamma: object
    t: float
    eig_C: np.ndarray = None
    negative: object = False


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def reduced_matrix(DY, JY, t_index, raise_on_negative=True):
    """C = sum_{r<t} K_r K_r^T dr with K_r = J^Y_{0<-t} D_r Y_t; Gamma = J C J^T.

    K_r is read from the factored field directly (no inverse flow is applied).
    """
    n = DY.n
    if not 0 <= t_index <= n:
        raise ValidationError(f"t_index {t_index} outside grid 0..{n}")
    dr = 1.0 / n
    rs = np.arange(t_index)
    K = DY.reduced(np.full_like(rs, t_index), rs)  # (..., t, m, d)
    C = _sym(np.einsum("...rad,...rbd->...ab", K, K) * dr)
    Jt = JY.J_fwd[..., t_index, :, :]
    Gamma = _sym(Jt @ C @ np.swapaxes(Jt, -1, -2))
    eC = np.linalg.eigvalsh(C)
    eG = np.linalg.eigvalsh(Gamma)
    trC = np.trace(C, axis1=-2, axis2=-1)
    trG = np.trace(Gamma, axis1=-2, axis2=-1)
    neg = (eC[..., 0] < -1e-10 * np.maximum(trC, 1e-300)) | (eG[..., 0] < -1e-10 * np.maximum(trG, 1e-300))
    if raise_on_negative and np.any(neg):
        raise NumericalDegradationError(
            f"Malliavin matrix has eigenvalue below -1e-10 trace (min {float(eC[..., 0].min()):.3e})"
        )
    return MalliavinMatrixPair(C, Gamma, eC[..., 0], eG[..., 0], float(DY.grid[t_index]), eC, neg)


def gamma_direct(DY, t_index):
    """Gamma from the full derivative: sum_{r<t} D_r Y_t (D_r Y_t)^T dr."""
    rs = np.arange(t_index)
    D = DY.value(np.full_like(rs, t_index), rs)
    return _sym(np.einsum("...rad,...rbd->...ab", D, D) / DY.n)


def transport_products(steps):
    """All restarted products T[t, r] = M_{t-1} ... M_r of one path's step matrices."""
    return kernels.restart_products(np.ascontiguousarray(steps, dtype=float))


def gaussian_degeneration_gap(DY, JY, Y):
    """max_{r<=t} |D_r Y_t - J^Y_{t<-r} V(Y_r)| with J^Y_{t<-r} from restarted products."""
    T = transport_products(JY.steps)  # (n+1, n+1, m, m)
    V = np.swapaxes(Y.aux["V"][:, 1:, :], -1, -2)  # (n+1, m, d)
    ref = np.einsum("trab,rbd->trad", T, V)
    tri = np.tril(np.ones((DY.n + 1, DY.n + 1), dtype=bool))
    dense = DY.dense()
    return float(np.abs(np.where(tri[..., None, None], dense - ref, 0.0)).max())


# ---------------------------------------------------------------------------
# f_v decomposition
# ---------------------------------------------------------------------------


def fv_decomposition(fields, rp, Y, JY, v):
    """Both sides of the bracket expansion of f_v^i(t) = v^T J^Y_{0<-t} V_i(Y_t).

    right side: v^T V_i(y_0) + int v^T J^Y_{0<-s}[V_0, V_i](Y_s) ds
                + sum_j int v^T J^Y_{0<-s}[V_j, V_i](Y_s) dX^j_s,
    the rough integral using J^Y_{0<-s}[V_l, [V_j, V_i]] as Gubinelli derivative.
    Returns (lhs, rhs), each (..., n+1, d).
    """
    v = np.asarray(v, dtype=float)
    V, DV, H = _field_arrays(fields, Y)
    br, _, sec = bracket_arrays(V, DV, H)
    Ji = JY.J_inv
    vJ = np.einsum("a,...ab->...b", v, Ji)  # (..., n+1, m)
    lhs = np.einsum("...b,...ib->...i", vJ, V[..., 1:, :])
    g = np.einsum("...b,...jib->...ij", vJ, br[..., :, 1:, :])  # [i, j]: j = 0..d
    gp = np.einsum("...b,...ljib->...ijl", vJ, sec[..., 1:, 1:, 1:, :])
    dXs = rp.increments
    inc = compensated_increments(g[..., :-1, :, 1:], gp[..., :-1, :, :, :], dXs, rp.step_areas)
    inc = inc + g[..., :-1, :, 0] * rp.dt
    rhs = np.empty_like(lhs)
    rhs[..., 0, :] = lhs[..., 0, :]
    rhs[..., 1:, :] = lhs[..., :1, :] + np.cumsum(inc, axis=-2)
    return lhs, rhs


def fv_decomposition_check(fields, rp, Y, JY, v):
    """Max absolute defect between the two sides over the grid and i."""
    lhs, rhs = fv_decomposition(fields, rp, Y, JY, v)
    return float(np.abs(lhs - rhs).max())
