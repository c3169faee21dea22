"""Dyadic modulus of theta-Hölder roughness.

For a path X on [0, 1] sampled on 2^L + 1 points,

    D_hat = inf_{|v|=1} min_{1<=n<=n_max} min_l 2^{n theta} sup_{t in I_{l,n}} |v^T X_{l/2^n, t}|,

with I_{l,n} = [l/2^n, (l+1)/2^n]. The roughness constant is bounded below by
L_lower = D_hat / (2 * 8^theta).
"""

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ValidationError
from .sphere import sphere_infimum


@dataclass
class RoughnessReport:
    theta: float
    n_max: int
    D_hat: object
    L_lower: object
    per_level: np.ndarray  # (..., n_max) level minima in the optimal direction (already scaled)
    direction: np.ndarray


def _level_minima(values, dirs, n_max):
    """(B, n_max, M) dyadic level minima of the projections values @ dirs."""
    proj = np.ascontiguousarray(values @ np.swapaxes(dirs, -1, -2))
    return kernels.dyadic_level_minima(proj, n_max)


def roughness_modulus(path, theta, n_max, sphere_mesh=64, refine=True):
    """D_hat and L_lower for one path or a batch (values of shape (..., N+1, d))."""
    if not 0.5 < theta < 1.0:
        raise ValidationError("theta must lie in (1/2, 1)")
    values = np.asarray(getattr(path, "values", path), dtype=float)
    N = values.shape[-2] - 1
    if n_max < 1 or 2**n_max > N or N % 2**n_max:
        raise ValidationError(f"n_max = {n_max} too deep for a grid of N = {N} steps")
    lead = values.shape[:-2]
    d = values.shape[-1]
    flat = np.ascontiguousarray(values.reshape((-1, N + 1, d)))
    B = flat.shape[0]
    scale = 2.0 ** (theta * np.arange(1, n_max + 1))
    mesh_len = 256 if d == 2 else sphere_mesh + d
    chunk = max(1, int(2**28 // (8 * (N + 1) * mesh_len)))
    D = np.empty(B)
    v = np.empty((B, d))
    for lo in range(0, B, chunk):
        part = flat[lo:lo + chunk]

        def objective(dirs, part=part):
            lv = _level_minima(part, np.ascontiguousarray(dirs), n_max)  # (b, n_max, M)
            return (lv * scale[None, :, None]).min(axis=1)

        D[lo:lo + chunk], v[lo:lo + chunk] = sphere_infimum(objective, part.shape[0], d, sphere_mesh, refine)
    per = _level_minima(flat, v[:, None, :], n_max)[:, :, 0] * scale
    L = D / (2.0 * 8.0**theta)
    if lead == ():
        return RoughnessReport(theta, n_max, float(D[0]), float(L[0]), per[0], v[0])
    return RoughnessReport(
        theta, n_max, D.reshape(lead), L.reshape(lead), per.reshape(lead + (n_max,)), v.reshape(lead + (d,))
    )
