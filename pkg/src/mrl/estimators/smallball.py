"""Small-ball probabilities P(inf_v sup_{[s, s+delta]} |v^T X_{s,t}| <= eps)."""

import numpy as np
from scipy.special import ndtr

from ..errors import ValidationError
from .sphere import sphere_infimum
from .tails import tail_report


def confinement_series(eps, delta=1.0, sigma=1.0, terms=200):
    """P(sup_{[0,delta]} |sigma W| <= eps) by the eigenfunction (theta) series."""
    eps = np.asarray(eps, dtype=float)
    n = np.arange(terms)
    k = 2 * n + 1
    x = (np.pi**2 * sigma**2 * delta / (8.0 * eps[..., None] ** 2)) * k**2
    return np.clip((4.0 / np.pi) * np.sum((-1.0) ** n / k * np.exp(-x), axis=-1), 0.0, 1.0)


def confinement_images(eps, delta=1.0, sigma=1.0, terms=50):
    """Same probability by the method of images (reflection principle)."""
    eps = np.asarray(eps, dtype=float)
    k = np.arange(-terms, terms + 1)
    z = eps[..., None] / (sigma * np.sqrt(delta))
    return np.clip(np.sum((-1.0) ** np.abs(k) * (ndtr((2 * k + 1) * z) - ndtr((2 * k - 1) * z)), axis=-1), 0.0, 1.0)


def bridge_survival(path, eps, sigma, dt):
    """Probability a Brownian bridge through the samples stays in (-eps, eps).

    Product over steps of the two one-sided bridge survival factors; the
    correction for crossing both barriers inside one step is of order
    exp(-8 eps^2 / (sigma^2 dt)) and is neglected. ``path`` is (B, n+1)
    relative to the window start.
    """
    a = eps - path[:, :-1]
    b = eps - path[:, 1:]
    c = eps + path[:, :-1]
    e = eps + path[:, 1:]
    inside = (a > 0) & (b > 0) & (c > 0) & (e > 0)
    s2 = sigma**2 * dt
    with np.errstate(over="ignore", invalid="ignore"):
        up = -np.expm1(-2.0 * np.clip(a * b, 0, None) / s2)
        dn = -np.expm1(-2.0 * np.clip(c * e, 0, None) / s2)
    logp = np.where(inside, np.log(np.clip(up, 1e-300, None)) + np.log(np.clip(dn, 1e-300, None)), -np.inf)
    return np.exp(logp.sum(axis=1))


def window_inf_sup(values, s_index, e_index, sphere_mesh=64, refine=True, chunk=2048):
    """inf_v sup_{t in window} |v^T (X_t - X_s)| for each path of (B, N+1, d) values."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[None]
    seg = values[:, s_index:e_index + 1, :] - values[:, s_index:s_index + 1, :]
    B, _, d = seg.shape
    out = np.empty(B)
    for lo in range(0, B, chunk):
        part = seg[lo:lo + chunk]

        def objective(dirs, part=part):
            return np.abs(np.einsum("btd,bmd->bmt", part, dirs)).max(axis=2)

        out[lo:lo + chunk] = sphere_infimum(objective, part.shape[0], d, sphere_mesh, refine)[0]
    return out


def smallball_report(quantities, eps_grid, delta, k=0.5, n_excluded=0, bridge_weights=None):
    """Tail report of the small-ball quantity with the exp(-C delta / eps^(2-2k)) fit.

    With ``bridge_weights`` (B, len(eps_grid)) the probabilities are the mean
    conditional survival weights instead of raw indicator frequencies.
    """
    if not 0 < k < 1:
        raise ValidationError("k must lie in (0, 1)")
    rep = tail_report(quantities, eps_grid, "smallball", n_excluded, fit="exp",
                      exp_power=2 - 2 * k, delta=delta)
    if bridge_weights is not None:
        w = np.asarray(bridge_weights, dtype=float)
        order = np.argsort(np.asarray(eps_grid, dtype=float))[::-1]
        w = w[:, order]
        p = w.mean(axis=0)
        se = w.std(axis=0, ddof=1) / np.sqrt(w.shape[0]) if w.shape[0] > 1 else np.zeros_like(p)
        rep.extra["bridge_p"] = p
        rep.extra["bridge_se"] = se
    return rep


def smallball_estimate(values, grid, s, delta, eps_grid, sphere_mesh=64, k=0.5,
                       bridge_sigma=None):
    """Empirical small-ball tail from already simulated paths (B, N+1, d).

    ``bridge_sigma`` (d = 1, constant coefficient sigma) adds the
    bridge-corrected estimate that removes the discrete-monitoring bias.
    """
    grid = np.asarray(grid, dtype=float)
    if s < 0 or delta <= 0 or s + delta > 1 + 1e-12:
        raise ValidationError("need [s, s + delta] inside [0, 1]")
    N = grid.size - 1
    si = int(round(s * N))
    ei = int(round((s + delta) * N))
    q = window_inf_sup(values, si, ei, sphere_mesh)
    weights = None
    if bridge_sigma is not None:
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 2:
            vals = vals[None]
        if vals.shape[-1] != 1:
            raise ValidationError("bridge correction is implemented for d = 1 only")
        seg = vals[:, si:ei + 1, 0] - vals[:, si:si + 1, 0]
        weights = np.stack([bridge_survival(seg, e, bridge_sigma, 1.0 / N) for e in eps_grid], axis=1)
    return smallball_report(q, eps_grid, delta, k, bridge_weights=weights)
