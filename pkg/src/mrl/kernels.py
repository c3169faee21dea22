"""Hot inner loops, each in a numba flavour and a pure-numpy flavour.

The public names at the bottom dispatch on :data:`mrl._accel.USE_NUMBA`. Both
flavours are importable directly (``*_nb`` / ``*_np``) so tests and the
benchmark can compare them.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# Batched matrix recursion  J_{k+1} = M_k J_k  (left)  or  J_k M_k  (right)
# ---------------------------------------------------------------------------


def matrix_recursion_np(M, J0, right=False):
    P, N, d, _ = M.shape
    out = np.empty((P, N + 1, d, d))
    out[:, 0] = J0
    cur = np.array(J0, dtype=float)
    for k in range(N):
        cur = cur @ M[:, k] if right else M[:, k] @ cur
        out[:, k + 1] = cur
    return out


@njit
def matrix_recursion_nb(M, J0, right=False):
    P, N, d, _ = M.shape
    out = np.empty((P, N + 1, d, d))
    for p in range(P):
        for a in range(d):
            for b in range(d):
                out[p, 0, a, b] = J0[p, a, b]
        for k in range(N):
            for a in range(d):
                for b in range(d):
                    s = 0.0
                    if right:
                        for c in range(d):
                            s += out[p, k, a, c] * M[p, k, c, b]
                    else:
                        for c in range(d):
                            s += M[p, k, a, c] * out[p, k, c, b]
                    out[p, k + 1, a, b] = s
    return out


# ---------------------------------------------------------------------------
# Restarted products T[t, r] = M_{t-1} ... M_r  (T[r, r] = I), single path
# ---------------------------------------------------------------------------


def restart_products_np(M):
    N, d, _ = M.shape
    T = np.zeros((N + 1, N + 1, d, d))
    eye = np.eye(d)
    T[0, 0] = eye
    for t in range(N):
        T[t + 1, : t + 1] = M[t] @ T[t, : t + 1]
        T[t + 1, t + 1] = eye
    return T


@njit
def restart_products_nb(M):
    N, d, _ = M.shape
    T = np.zeros((N + 1, N + 1, d, d))
    for a in range(d):
        T[0, 0, a, a] = 1.0
    for t in range(N):
        for r in range(t + 1):
            for a in range(d):
                for b in range(d):
                    s = 0.0
                    for c in range(d):
                        s += M[t, a, c] * T[t, r, c, b]
                    T[t + 1, r, a, b] = s
        for a in range(d):
            T[t + 1, t + 1, a, a] = 1.0
    return T


# ---------------------------------------------------------------------------
# Midpoint-sum areas over coarse intervals of a fine path
#   A[p, k] = sum_{j in block k} ((Z_j + Z_{j+1})/2 - Z_{start}) (x) (Z_{j+1} - Z_j)
# ---------------------------------------------------------------------------


def coarse_areas_np(Z, stride):
    P, n1, D = Z.shape
    N = n1 - 1
    Nc = N // stride
    start = Z[:, :N:stride]  # (P, Nc, D)
    left = Z[:, :N].reshape(P, Nc, stride, D)
    right = Z[:, 1:].reshape(P, Nc, stride, D)
    mid = 0.5 * (left + right) - start[:, :, None, :]
    inc = right - left
    return np.einsum("pksa,pksb->pkab", mid, inc)


@njit
def coarse_areas_nb(Z, stride):
    P, n1, D = Z.shape
    N = n1 - 1
    Nc = N // stride
    out = np.zeros((P, Nc, D, D))
    for p in range(P):
        for k in range(Nc):
            j0 = k * stride
            for j in range(j0, j0 + stride):
                for a in range(D):
                    m = 0.5 * (Z[p, j, a] + Z[p, j + 1, a]) - Z[p, j0, a]
                    for b in range(D):
                        out[p, k, a, b] += m * (Z[p, j + 1, b] - Z[p, j, b])
    return out


# ---------------------------------------------------------------------------
# Dyadic sups: for level n = 1..n_max and interval I_{l,n}, the value
#   sup_{t in I_{l,n}} |Y_t - Y_{l/2^n}|, minimised over l. Interval extrema
#   are built once at level n_max and merged upwards.
# Y has shape (B, N+1, M) (M projections, e.g. one per mesh direction).
# Returns (B, n_max, M).
# ---------------------------------------------------------------------------


def dyadic_level_minima_np(Y, n_max):
    B, n1, M = Y.shape
    N = n1 - 1
    out = np.empty((B, n_max, M))
    nint = 2**n_max
    L = N // nint
    blocks = Y[:, :N].reshape(B, nint, L, M)
    ends = Y[:, L::L][:, :nint, None, :]
    # max/min over each closed finest interval, then merged pairwise upwards
    hi = np.maximum(blocks.max(axis=2), ends[:, :, 0])
    lo = np.minimum(blocks.min(axis=2), ends[:, :, 0])
    for n in range(n_max, 0, -1):
        base = Y[:, : N : N // 2**n][:, : 2**n]
        sup = np.maximum(hi - base, base - lo)
        out[:, n - 1] = sup.min(axis=1)
        hi = np.maximum(hi[:, 0::2], hi[:, 1::2])
        lo = np.minimum(lo[:, 0::2], lo[:, 1::2])
    return out


@njit
def dyadic_level_minima_nb(Y, n_max):
    B, n1, M = Y.shape
    N = n1 - 1
    nint = 2**n_max
    L = N // nint
    out = np.empty((B, n_max, M))
    hi = np.empty(nint)
    lo = np.empty(nint)
    for b in range(B):
        for m in range(M):
            for l in range(nint):
                s = l * L
                h = Y[b, s, m]
                w = h
                for t in range(s + 1, s + L + 1):
                    v = Y[b, t, m]
                    if v > h:
                        h = v
                    if v < w:
                        w = v
                hi[l] = h
                lo[l] = w
            cnt = nint
            for n in range(n_max, 0, -1):
                step = N // cnt
                best = np.inf
                for l in range(cnt):
                    base = Y[b, l * step, m]
                    sup = max(hi[l] - base, base - lo[l])
                    if sup < best:
                        best = sup
                out[b, n - 1, m] = best
                cnt //= 2
                for l in range(cnt):
                    hi[l] = max(hi[2 * l], hi[2 * l + 1])
                    lo[l] = min(lo[2 * l], lo[2 * l + 1])
    return out


# ---------------------------------------------------------------------------
# Exact pairwise Hölder constants over all grid pairs
# ---------------------------------------------------------------------------


def pairwise_holder_np(X, times, alpha):
    n1 = X.shape[0]
    best = 0.0
    for s in range(n1 - 1):
        inc = np.sqrt(((X[s + 1 :] - X[s]) ** 2).sum(axis=1))
        best = max(best, float((inc / (times[s + 1 :] - times[s]) ** alpha).max()))
    return best


@njit
def pairwise_holder_nb(X, times, alpha):
    n1, D = X.shape
    best = 0.0
    for s in range(n1 - 1):
        for t in range(s + 1, n1):
            acc = 0.0
            for a in range(D):
                diff = X[t, a] - X[s, a]
                acc += diff * diff
            v = np.sqrt(acc) / (times[t] - times[s]) ** alpha
            if v > best:
                best = v
    return best


def pairwise_holder2_np(X, XX0, times, alpha):
    """Hölder constants of the level-1 and level-2 increments over all pairs."""
    n1 = X.shape[0]
    b1 = 0.0
    b2 = 0.0
    for s in range(n1 - 1):
        xs = X[s + 1 :] - X[s]
        lvl2 = XX0[s + 1 :] - XX0[s] - np.einsum("a,tb->tab", X[s] - X[0], xs)
        dt = times[s + 1 :] - times[s]
        b1 = max(b1, float((np.sqrt((xs**2).sum(axis=1)) / dt**alpha).max()))
        b2 = max(b2, float((np.sqrt((lvl2**2).sum(axis=(1, 2))) / dt ** (2 * alpha)).max()))
    return b1, b2


@njit
def pairwise_holder2_nb(X, XX0, times, alpha):
    n1, D = X.shape
    b1 = 0.0
    b2 = 0.0
    for s in range(n1 - 1):
        for t in range(s + 1, n1):
            dt = times[t] - times[s]
            acc1 = 0.0
            acc2 = 0.0
            for a in range(D):
                xa = X[t, a] - X[s, a]
                acc1 += xa * xa
                x0a = X[s, a] - X[0, a]
                for b in range(D):
                    v = XX0[t, a, b] - XX0[s, a, b] - x0a * (X[t, b] - X[s, b])
                    acc2 += v * v
            v1 = np.sqrt(acc1) / dt**alpha
            v2 = np.sqrt(acc2) / dt ** (2 * alpha)
            if v1 > b1:
                b1 = v1
            if v2 > b2:
                b2 = v2
    return b1, b2


if USE_NUMBA:
    matrix_recursion = matrix_recursion_nb
    restart_products = restart_products_nb
    coarse_areas = coarse_areas_nb
    dyadic_level_minima = dyadic_level_minima_nb
    pairwise_holder = pairwise_holder_nb
    pairwise_holder2 = pairwise_holder2_nb
else:
    matrix_recursion = matrix_recursion_np
    restart_products = restart_products_np
    coarse_areas = coarse_areas_np
    dyadic_level_minima = dyadic_level_minima_np
    pairwise_holder = pairwise_holder_np
    pairwise_holder2 = pairwise_holder2_np

KERNELS = {
    "matrix_recursion": (matrix_recursion_nb, matrix_recursion_np),
    "restart_products": (restart_products_nb, restart_products_np),
    "coarse_areas": (coarse_areas_nb, coarse_areas_np),
    "dyadic_level_minima": (dyadic_level_minima_nb, dyadic_level_minima_np),
    "pairwise_holder": (pairwise_holder_nb, pairwise_holder_np),
    "pairwise_holder2": (pairwise_holder2_nb, pairwise_holder2_np),
}
