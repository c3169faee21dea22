"""Gaussian-kernel density estimates and Gaussian upper-bound fits."""

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

MIN_SAMPLES = 100


class GaussianKDE:
    """Gaussian KDE with covariance ``bw^2 * Sigma``.

    ``bandwidth="scott"`` uses the factor n^{-1/(d+4)} times the sample
    covariance; a float gives an isotropic kernel with that standard
    deviation. Degenerate sample covariances (e.g. identical samples) fall
    back to the identity as reference covariance.
    """

    def __init__(self, samples, bandwidth="scott", chunk_bytes=64 * 2**20):
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        n, d = x.shape
        if n < MIN_SAMPLES:
            raise ValidationError(f"need at least {MIN_SAMPLES} samples, got {n}")
        self.samples = x
        self.n, self.d = n, d
        if bandwidth == "scott":
            factor = n ** (-1.0 / (d + 4))
            cov = np.atleast_2d(np.cov(x, rowvar=False))
            if np.linalg.eigvalsh(cov).min() <= 1e-12 * max(1.0, np.trace(cov)):
                cov = np.eye(d)
            self.cov = factor**2 * cov
        elif isinstance(bandwidth, (int, float)) and bandwidth > 0:
            self.cov = float(bandwidth) ** 2 * np.eye(d)
        else:
            raise ValidationError(f"bandwidth must be 'scott' or a positive number, got {bandwidth!r}")
        self.chol = np.linalg.cholesky(self.cov)
        self._white = np.linalg.solve(self.chol, x.T).T
        self._norm = 1.0 / (n * (2 * np.pi) ** (d / 2) * np.prod(np.diag(self.chol)))
        self._chunk = max(1, chunk_bytes // (8 * n * d))

    def __call__(self, points):
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            p = p[:, None] if self.d == 1 else p[None, :]
        w = np.linalg.solve(self.chol, p.T).T
        out = np.empty(len(w))
        s2 = np.sum(self._white**2, axis=1)
        for lo in range(0, len(w), self._chunk):
            q = w[lo:lo + self._chunk]
            d2 = np.sum(q**2, axis=1)[:, None] + s2[None, :] - 2.0 * q @ self._white.T
            out[lo:lo + self._chunk] = np.exp(-0.5 * np.clip(d2, 0.0, None)).sum(axis=1)
        return out * self._norm


def kde_density(samples, bandwidth="scott"):
    return GaussianKDE(samples, bandwidth)


@dataclass
class GaussianBoundFit:
    C1: float
    C2: float
    violations: list
    eta: float
    max_density: float


def gaussian_bound_fit(density, y0, t, eval_grid, eta=0.05, tol=1e-10):
    """Greatest C2 >= 0 whose least admissible C1 stays within (1 + eta) max p.

    C1(C2) = max_y p(y) exp(C2 |y - y0|^2 / t) is the least constant with
    p <= C1 exp(-C2 |y - y0|^2 / t) on the grid; it increases with C2, so the
    greatest admissible C2 is found by bisection. ``violations`` lists grid
    points with |y - y0| > 0 where no positive C2 is compatible with the
    fitted C1 (p(y) >= C1).
    """
    pts = np.asarray(eval_grid, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    p = density(pts) if callable(density) else np.asarray(density, dtype=float)
    r2 = np.sum((pts - np.asarray(y0, dtype=float)) ** 2, axis=1) / t
    logp = np.log(np.clip(p, 1e-300, None))
    pmax = float(p.max())
    cap = np.log(pmax) + np.log1p(eta)

    def logC1(c2):
        return float(np.max(logp + c2 * r2))

    lo, hi = 0.0, 1.0
    while logC1(hi) <= cap and hi < 1e6:
        lo, hi = hi, 2 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if logC1(mid) <= cap:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    C2 = lo
    C1 = float(np.exp(logC1(C2)))
    bad = np.where((r2 > 0) & (p >= C1 * (1 - 1e-12)) & (p > 0))[0]
    return GaussianBoundFit(C1, C2, pts[bad].tolist(), eta, pmax)


def ball_grid(y0, radius, points_per_axis=41):
    """Cartesian grid points within |y - y0| <= radius."""
    y0 = np.asarray(y0, dtype=float)
    axes = [np.linspace(c - radius, c + radius, points_per_axis) for c in y0]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, y0.size)
    return mesh[np.linalg.norm(mesh - y0, axis=1) <= radius * (1 + 1e-12)]
