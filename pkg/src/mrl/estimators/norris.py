"""Diagnostics for the deterministic Norris-type bound

    |Y|_inf + |b|_inf <= M A^q |Z|_inf^l,   Z = int Y dX + int b dt,

with A = 1 + 1/L_lower + rho_alpha(X) + |Y|_alpha + |Y'|_alpha + |b|_alpha.
The constants M, q, l are existential, so only fits and orderings are reported.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..rough_core import ControlledPath, holder_norms, path_holder, rough_integral
from .roughness import roughness_modulus


@dataclass
class NorrisReport:
    A_value: float
    sup_Y: float
    sup_b: float
    sup_Z: float
    holder: dict
    L_lower: float
    counterexample: bool


def norris_output(Y, b, rp):
    """Z = rough integral of the controlled integrand plus left-point time integral of b."""
    Zi = rough_integral(Y, rp, record_remainder=False).Y
    b = np.asarray(b, dtype=float)
    drift = np.zeros_like(Zi)
    np.cumsum(b[:-1] * rp.dt, axis=0, out=drift[1:])
    return Zi + drift


def norris_diagnostic(rp, Y, b, Z=None, theta=0.7, alpha=None, n_max=None, L_lower=None):
    """Norms entering the Norris bound for a single path.

    ``Y`` is a ControlledPath with values (n+1, m, d) and derivatives
    (n+1, m, d, d); ``b`` has shape (n+1, m). ``Z`` defaults to
    :func:`norris_output`.
    """
    alpha = rp.alpha if alpha is None else alpha
    if Z is None:
        Z = norris_output(Y, b, rp)
    times = np.asarray(rp.grid)
    if L_lower is None:
        n_max = n_max or max(1, int(np.log2(rp.n)) - 2)
        L_lower = roughness_modulus(rp.X, theta, n_max).L_lower
    hol = {
        "rho_alpha": holder_norms(rp, alpha, mode="exact").rho_alpha,
        "Y": path_holder(Y.Y, times, alpha),
        "Yp": path_holder(Y.Yp, times, alpha) if Y.Yp is not None else 0.0,
        "b": path_holder(b, times, alpha),
    }
    inv_L = np.inf if L_lower <= 0 else 1.0 / L_lower
    A = 1.0 + inv_L + hol["rho_alpha"] + hol["Y"] + hol["Yp"] + hol["b"]
    sY = float(np.abs(Y.Y).max())
    sb = float(np.abs(b).max())
    sZ = float(np.abs(Z).max())
    return NorrisReport(float(A), sY, sb, sZ, hol, float(L_lower), sZ == 0.0 and (sY + sb) > 0.0)


def norris_scaling_fit(rp, Y, b, scales=(1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5)):
    """Fit l in log(|Y|+|b|) ~ l log|Z| along the family (eps Y, eps b).

    Returns (fitted_l, monotone, rows) where ``monotone`` states that
    |Y|_inf + |b|_inf decreases whenever |Z|_inf decreases along the family.
    """
    rows = []
    for eps in scales:
        Ye = ControlledPath(Y.grid, eps * Y.Y, None if Y.Yp is None else eps * Y.Yp)
        be = eps * np.asarray(b, dtype=float)
        Z = norris_output(Ye, be, rp)
        rows.append((eps, float(np.abs(Ye.Y).max() + np.abs(be).max()), float(np.abs(Z).max())))
    arr = np.array(rows)
    if np.any(arr[:, 2] <= 0):
        raise ValidationError("degenerate family: |Z|_inf vanished")
    order = np.argsort(arr[:, 2])
    mono = bool(np.all(np.diff(arr[order, 1]) >= 0))
    slope = float(np.polyfit(np.log(arr[:, 2]), np.log(arr[:, 1]), 1)[0])
    return slope, mono, rows
