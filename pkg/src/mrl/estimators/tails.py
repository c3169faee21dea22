"""Empirical lower-tail reports P(Q <= eps) with Wilson intervals and decay fits."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.stats import binomtest

from ..errors import ValidationError


@dataclass
class TailReport:
    quantity_id: str
    epsilons: np.ndarray  # decreasing
    counts: np.ndarray
    n_paths: int
    probabilities: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    monotone: np.ndarray  # isotonic projection, nonincreasing along the decreasing eps grid
    fitted_exponent: float
    fit_range: tuple
    fit_kind: str
    n_excluded: int = 0
    extra: dict = field(default_factory=dict)

    def rows(self):
        for i, e in enumerate(self.epsilons):
            yield {
                "eps": float(e),
                "count": int(self.counts[i]),
                "n_paths": int(self.n_paths),
                "p": float(self.probabilities[i]),
                "ci_low": float(self.ci_low[i]),
                "ci_high": float(self.ci_high[i]),
                "p_monotone": float(self.monotone[i]),
            }


def wilson_interval(k, n, level=0.95):
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def _slope(x, y):
    if len(x) < 2:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def smallest_decade(eps, counts, min_hits):
    """Indices of the lowest decade [lo, 10 lo] of the grid whose lower end has >= min_hits."""
    eps = np.asarray(eps)
    order = np.argsort(eps)
    for i in order:
        lo = eps[i]
        if counts[i] < min_hits:
            continue
        sel = np.where((eps >= lo * (1 - 1e-12)) & (eps <= 10 * lo * (1 + 1e-12)))[0]
        if sel.size >= 2 and eps[sel].max() >= 10 * lo * (1 - 1e-9):
            return sel
    return np.array([], dtype=int)


def tail_report(values, eps_grid, quantity_id, n_excluded=0, fit="loglog", min_hits=30,
                exp_power=None, delta=1.0):
    """P(Q <= eps) over a grid.

    fit="loglog": slope of log P against log eps on the smallest decade of the
    grid with at least ``min_hits`` hits at its lower end.
    fit="exp": slope of log P against delta / eps^exp_power over the grid
    points with hits (the small-ball exponent family).
    """
    vals = np.asarray(values, dtype=float).ravel()
    eps = np.sort(np.asarray(eps_grid, dtype=float).ravel())[::-1]
    if eps.size == 0:
        raise ValidationError("empty eps grid")
    n = vals.size
    srt = np.sort(vals)
    counts = np.searchsorted(srt, eps, side="right")
    p = counts / n if n else np.zeros_like(eps)
    ci = np.array([wilson_interval(c, n) for c in counts]).reshape(-1, 2)
    w = np.full(eps.size, float(max(n, 1)))
    mono = isotonic_regression(p, weights=w, increasing=False).x if n else p
    if fit == "loglog":
        sel = smallest_decade(eps, counts, min_hits)
        sel = sel[counts[sel] > 0]
        slope = _slope(np.log(eps[sel]), np.log(p[sel])) if sel.size else float("nan")
        rng = (float(eps[sel].min()), float(eps[sel].max())) if sel.size else (np.nan, np.nan)
    elif fit == "exp":
        if exp_power is None:
            raise ValidationError("exp fit needs exp_power")
        sel = np.where(counts > 0)[0]
        x = delta / eps[sel] ** exp_power
        slope = _slope(x, np.log(p[sel]))
        rng = (float(eps[sel].min()), float(eps[sel].max())) if sel.size else (np.nan, np.nan)
    else:
        raise ValidationError(f"unknown fit {fit!r}")
    return TailReport(
        quantity_id, eps, counts, n, p, ci[:, 0], ci[:, 1], mono, slope, rng, fit, int(n_excluded)
    )
