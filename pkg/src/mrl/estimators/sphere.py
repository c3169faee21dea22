"""Infima over unit directions of path functionals.

d = 1 has the two directions +-1 (every functional used here is even, so one
suffices); d = 2 uses an exact angle parametrisation on [0, pi) followed by a
golden-section refinement around the mesh minimiser; d >= 3 uses a fixed
quasi-uniform mesh (Fibonacci sphere for d = 3, seeded Gaussian directions
otherwise) plus the coordinate axes.
"""

import numpy as np

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def sphere_mesh(d, size=64):
    """Unit directions covering the half sphere (functionals are even in v)."""
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        phi = np.arange(size) * np.pi / size
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    if d == 3:
        i = np.arange(size) + 0.5
        z = 1.0 - i / size  # upper half sphere only
        r = np.sqrt(1.0 - z * z)
        ang = np.pi * (1.0 + np.sqrt(5.0)) * i
        mesh = np.stack([r * np.cos(ang), r * np.sin(ang), z], axis=1)
    else:
        rng = np.random.Generator(np.random.Philox(key=d))
        mesh = rng.standard_normal((size, d))
        mesh /= np.linalg.norm(mesh, axis=1, keepdims=True)
    return np.concatenate([np.eye(d), mesh])


def angle_dir(phi):
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1)


def sphere_infimum(objective, batch, d, mesh_size=64, refine=True, iters=30):
    """Per-batch-item minimum over unit v of ``objective(V)``.

    ``objective`` maps directions of shape (B, M, d) to values (B, M). Returns
    (values (B,), argmin directions (B, d)).
    """
    if d == 2:
        mesh_size = max(mesh_size, 256)
    mesh = sphere_mesh(d, mesh_size)
    vals = objective(np.broadcast_to(mesh, (batch,) + mesh.shape))
    j = np.argmin(vals, axis=1)
    best = vals[np.arange(batch), j]
    vbest = mesh[j]
    if d != 2 or not refine:
        return best, vbest
    step = np.pi / mesh.shape[0]
    phi0 = np.arange(mesh.shape[0])[j] * step
    lo, hi = phi0 - step, phi0 + step

    def f(phi):
        return objective(angle_dir(phi)[:, None, :])[:, 0]

    for _ in range(iters):
        c = hi - GOLDEN * (hi - lo)
        e = lo + GOLDEN * (hi - lo)
        fc, fe = f(c), f(e)
        for ang, val in ((c, fc), (e, fe)):
            better = val < best
            best = np.where(better, val, best)
            vbest = np.where(better[:, None], angle_dir(ang), vbest)
        left = fc < fe
        hi = np.where(left, e, hi)
        lo = np.where(left, lo, c)
    return best, vbest
