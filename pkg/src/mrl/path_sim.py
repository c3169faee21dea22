"""Brownian drivers, Itô integration of X and of its Jacobian flow.

Arrays may carry leading batch axes: a driver with increments of shape
``(P, N, d)`` produces paths of shape ``(P, N+1, d)`` and flows of shape
``(P, N+1, d, d)``. The time loop runs in Python with every step vectorised
over the batch; matrix recursions go through :mod:`mrl.kernels`.
"""

import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import BlowUpError, NumericalDegradationWarning, ValidationError

COMPOSITION_TOL = 1e-6
DUMP_MAGIC = b"MRLB1"


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


def uniform_grid(N):
    return np.linspace(0.0, 1.0, N + 1)


def _generator(seed, path_index):
    key = ((int(path_index) & (2**64 - 1)) << 64) | (int(seed) & (2**64 - 1))
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class BrownianDriver:
    grid: np.ndarray
    increments: np.ndarray  # (..., N, d)
    seed: int
    path_index: object  # int, or an index array for batched drivers

    @property
    def N(self):
        return self.increments.shape[-2]

    @property
    def d(self):
        return self.increments.shape[-1]

    @property
    def dt(self):
        return 1.0 / self.N

    def cumulative(self):
        """Brownian values W_{t_k}, shape (..., N+1, d)."""
        W = np.zeros(self.increments.shape[:-2] + (self.N + 1, self.d))
        np.cumsum(self.increments, axis=-2, out=W[..., 1:, :])
        return W

    def coarsen(self, factor):
        """Driver on a grid ``factor`` times coarser, built from the same increments."""
        if self.N % factor:
            raise ValidationError(f"factor {factor} does not divide N = {self.N}")
        inc = self.increments.reshape(
            self.increments.shape[:-2] + (self.N // factor, factor, self.d)
        ).sum(axis=-2)
        return replace(self, grid=uniform_grid(self.N // factor), increments=inc)

    def perturbed(self, direction_increments, eps):
        """Driver with increments W + eps h (``direction_increments`` = h increments)."""
        return replace(self, increments=self.increments + eps * np.asarray(direction_increments))


def make_driver(seed, path_index, N, d):
    """Brownian increments for one path, keyed by ``(seed, path_index)``.

    A Philox counter-based stream is keyed by the pair; increment (step k,
    component i) is the (k*d + i)-th normal of that stream, so regenerating a
    path never depends on which worker draws it or in which order.
    """
    if N < 1 or d < 1:
        raise ValidationError(f"need N >= 1 and d >= 1, got N={N}, d={d}")
    z = _generator(seed, path_index).standard_normal(N * d)
    return BrownianDriver(uniform_grid(N), z.reshape(N, d) * np.sqrt(1.0 / N), int(seed), int(path_index))


def make_drivers(seed, path_indices, N, d):
    """Batched drivers: increments of shape (P, N, d), one keyed stream per index."""
    idx = np.asarray(path_indices, dtype=np.int64).ravel()
    if N < 1 or d < 1:
        raise ValidationError(f"need N >= 1 and d >= 1, got N={N}, d={d}")
    inc = np.empty((idx.size, N, d))
    for p, i in enumerate(idx):
        inc[p] = _generator(seed, i).standard_normal(N * d).reshape(N, d)
    inc *= np.sqrt(1.0 / N)
    return BrownianDriver(uniform_grid(N), inc, int(seed), idx)


# ---------------------------------------------------------------------------
# X
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplePath:
    grid: np.ndarray
    values: np.ndarray  # (..., N+1, d)
    meta: dict = None

    @property
    def N(self):
        return self.values.shape[-2] - 1

    @property
    def d(self):
        return self.values.shape[-1]

    def scaled(self, c):
        return replace(self, values=self.values * c)


def _check_finite(arr, k):
    if not np.all(np.isfinite(arr)):
        raise BlowUpError(f"non-finite state at step {k}", step=k)


def simulate_X(spec, driver, x0, scheme="euler", convention=None):
    """Itô scheme ``X_{k+1} = X_k + A(X_k) dW_k + B(X_k) dt`` (+ diagonal Milstein terms)."""
    if scheme not in ("euler", "milstein"):
        raise ValidationError(f"unknown scheme {scheme!r}")
    if driver.d != spec.d:
        raise ValidationError(f"driver dimension {driver.d} != spec dimension {spec.d}")
    conv = convention or spec.convention
    dW = driver.increments
    N, d, dt = driver.N, driver.d, driver.dt
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), dW.shape[:-2] + (d,))
    X = np.empty(dW.shape[:-2] + (N + 1, d))
    X[..., 0, :] = x0
    meta = {"scheme": scheme, "convention": conv}
    if spec.constant and spec.drift is None:
        # frozen coefficients: the Euler sum is exact
        A0 = spec.A(x0)
        X[..., 1:, :] = x0[..., None, :] + np.cumsum(
            np.einsum("...ij,...kj->...ki", A0, dW), axis=-2
        )
        _check_finite(X, N)
        return SamplePath(driver.grid, X, meta)
    cur = np.array(x0)
    for k in range(N):
        A = spec.A(cur)
        B = spec.B(cur, conv)
        w = dW[..., k, :]
        nxt = cur + np.einsum("...ij,...j->...i", A, w) + B * dt
        if scheme == "milstein":
            dA = spec.dA(cur)  # [..., a, i, c] = d_c A_ai
            # (DA_i A_i)_a = sum_c d_c A_ai A_ci
            corr = np.einsum("...aic,...ci->...ai", dA, A)
            nxt = nxt + np.einsum("...ai,...i->...a", corr, 0.5 * (w * w - dt))
        _check_finite(nxt, k + 1)
        X[..., k + 1, :] = nxt
        cur = nxt
    return SamplePath(driver.grid, X, meta)


# ---------------------------------------------------------------------------
# Jacobian flow
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowBundle:
    X: SamplePath
    J_fwd: np.ndarray  # (..., N+1, d, d)  J_{t<-0}
    J_inv: np.ndarray  # (..., N+1, d, d)  J_{0<-t}
    phi_sup: object
    defect: object  # max_k |J_fwd J_inv - I| after any fallback
    sde_defect: object  # same, for the inverse as integrated from its own SDE
    inverse_method: str
    steps: np.ndarray = None  # forward step matrices (..., N, d, d)

    def transport(self, t, r):
        """J_{t<-r} = J_fwd[t] J_inv[r]."""
        return self.J_fwd[..., t, :, :] @ self.J_inv[..., r, :, :]


def _flat(a, tail):
    lead = a.shape[: a.ndim - tail]
    return a.reshape((-1,) + a.shape[a.ndim - tail:]), lead


def matrix_path(steps, right=False):
    """Products of step matrices starting from the identity (any leading batch)."""
    M, lead = _flat(np.ascontiguousarray(steps, dtype=float), 3)
    P, N, d, _ = M.shape
    J0 = np.broadcast_to(np.eye(d), (P, d, d)).copy()
    out = kernels.matrix_recursion(M, J0, right)
    return out.reshape(lead + out.shape[1:])


def composition_defect(J_fwd, J_inv):
    """Per-leading-batch max over k of the Frobenius norm of J_fwd J_inv - I."""
    d = J_fwd.shape[-1]
    err = np.linalg.norm(J_fwd @ J_inv - np.eye(d), axis=(-2, -1))
    return err.max(axis=-1)


def condition_scale(J_fwd, J_inv):
    d = J_fwd.shape[-1]
    s = np.linalg.norm(J_fwd, axis=(-2, -1)) * np.linalg.norm(J_inv, axis=(-2, -1)) / d
    return np.maximum(1.0, s.max(axis=-1))


def monitored_inverse(fwd_steps, inv_steps, tol=COMPOSITION_TOL, label="flow"):
    """Forward flow from ``fwd_steps`` and inverse from its own ``inv_steps``.

    If the composition defect of the integrated inverse exceeds ``tol`` times
    the condition scale on any path, a :class:`NumericalDegradationWarning`
    is issued and the inverse is rebuilt as the product of exact inverses of
    the forward steps, which restores the composition identity to rounding.
    Returns ``(J_fwd, J_inv, defect, sde_defect, method)``.
    """
    J_fwd = matrix_path(fwd_steps)
    J_sde = matrix_path(inv_steps, right=True)
    sde_defect = composition_defect(J_fwd, J_sde)
    limit = tol * condition_scale(J_fwd, J_sde)
    if np.all(sde_defect <= limit):
        return J_fwd, J_sde, sde_defect, sde_defect, "sde"
    worst = float(np.max(sde_defect))
    warnings.warn(
        NumericalDegradationWarning(
            f"{label}: inverse-equation composition defect {worst:.3e} exceeds "
            f"tolerance; falling back to step-wise inversion",
            worst,
        ),
        stacklevel=3,
    )
    J_inv = matrix_path(np.linalg.inv(fwd_steps), right=True)
    return J_fwd, J_inv, composition_defect(J_fwd, J_inv), sde_defect, "step_inverse"


def flow_steps(spec, X, increments, convention=None):
    """Euler step matrices of the forward and inverse Jacobian equations.

    forward  M_k = I + sum_i DA_i dW^i + DB dt
    inverse  N_k = I - sum_i DA_i dW^i - (DB - sum_i DA_i^2) dt
    with (DA_i)_{ac} = d_c A_{ai}.
    """
    vals = X.values[..., :-1, :]
    N = increments.shape[-2]
    d = vals.shape[-1]
    dt = 1.0 / N
    eye = np.eye(d)
    if spec.constant and spec.drift is None:
        M = np.broadcast_to(eye, increments.shape[:-1] + (d, d)).copy()
        return M, M.copy()
    conv = convention or spec.convention
    dA = spec.dA(vals)  # (..., N, a, i, c)
    DAi = np.moveaxis(dA, -2, -3)  # (..., N, i, a, c)
    DB = spec.DB(vals, conv)
    noise = np.einsum("...iac,...i->...ac", DAi, increments)
    sq = np.einsum("...iab,...ibc->...ac", DAi, DAi)
    M = eye + noise + DB * dt
    Ninv = eye - noise - (DB - sq) * dt
    return M, Ninv


def simulate_flow(spec, driver, X, convention=None, tol=COMPOSITION_TOL):
    """Jacobian flow J_{t<-0} and its inverse on the driver grid."""
    if X.values.shape[-2] != driver.N + 1:
        raise ValidationError("path and driver grids differ")
    M, Ninv = flow_steps(spec, X, driver.increments, convention)
    J_fwd, J_inv, defect, sde_defect, method = monitored_inverse(M, Ninv, tol, "J^X")
    norms = np.maximum(
        np.linalg.norm(J_fwd, axis=(-2, -1)), np.linalg.norm(J_inv, axis=(-2, -1))
    )
    phi = np.maximum(np.linalg.norm(X.values, axis=-1), norms).max(axis=-1)
    return FlowBundle(X, J_fwd, J_inv, phi, defect, sde_defect, method, M)


# ---------------------------------------------------------------------------
# Binary path dumps
# ---------------------------------------------------------------------------


def dump_path(fileobj, path, seed, path_index):
    """Write one path: magic, little-endian int64 d, N, seed, path_index, then float64 values."""
    vals = np.asarray(path.values, dtype="<f8")
    if vals.ndim != 2:
        raise ValidationError("dump_path expects a single (unbatched) path")
    fileobj.write(DUMP_MAGIC)
    fileobj.write(struct.pack("<qqQq", path.d, path.N, int(seed) & (2**64 - 1), int(path_index)))
    fileobj.write(vals.tobytes())


def load_path(fileobj):
    magic = fileobj.read(len(DUMP_MAGIC))
    if magic != DUMP_MAGIC:
        raise ValidationError("not a path dump (bad magic)")
    d, N, seed, idx = struct.unpack("<qqQq", fileobj.read(32))
    vals = np.frombuffer(fileobj.read(8 * d * (N + 1)), dtype="<f8").reshape(N + 1, d)
    return SamplePath(uniform_grid(N), vals.astype(float)), seed, idx
