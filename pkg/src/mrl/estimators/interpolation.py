"""Sup-norm interpolation between a Hölder seminorm and the L^2 norm.

For piecewise-linear g on a grid of [0, 1] every quantity is computed
exactly: the sup norm and the Hölder seminorm are attained at nodes, and the
L^2 norm integrates each linear piece in closed form.

Two forms of the bound are offered (L = |g|_{L^2}^2, [g] = gamma-Hölder seminorm):

* ``"literal"``:      |g|_inf <= 2 [g]^{2 gamma/(2 gamma+1)} L^{1/(2 gamma+1)} + 2 L
* ``"homogeneous"``:  |g|_inf <= 2 [g]^{1/(2 gamma+1)} |g|_{L^2}^{2 gamma/(2 gamma+1)} + 2 |g|_{L^2}

Only the second is invariant under g -> c g; the first fails e.g. for small
constants.
"""

import numpy as np

from .. import kernels
from ..errors import ValidationError

FORMS = ("literal", "homogeneous")


def pl_norms(g, times, gamma):
    """(sup norm, gamma-Hölder seminorm, L^2 norm squared) of the piecewise-linear interpolant."""
    g = np.asarray(g, dtype=float).reshape(-1)
    times = np.asarray(times, dtype=float)
    sup = float(np.abs(g).max())
    hol = float(kernels.pairwise_holder(np.ascontiguousarray(g[:, None]), times, float(gamma)))
    dt = np.diff(times)
    l2 = float(np.sum(dt / 3.0 * (g[:-1] ** 2 + g[:-1] * g[1:] + g[1:] ** 2)))
    return sup, hol, l2


def interpolation_rhs(hol, l2, gamma, form="literal"):
    if form == "literal":
        return 2.0 * hol ** (2 * gamma / (2 * gamma + 1)) * l2 ** (1 / (2 * gamma + 1)) + 2.0 * l2
    if form == "homogeneous":
        nrm = np.sqrt(l2)
        return 2.0 * hol ** (1 / (2 * gamma + 1)) * nrm ** (2 * gamma / (2 * gamma + 1)) + 2.0 * nrm
    raise ValidationError(f"unknown form {form!r}")


def interpolation_check(g, gamma, times=None, form="literal", rtol=1e-12):
    """Evaluate both sides; inapplicable (not failed) when |g|_{L^2}^2 >= 1."""
    if not 0 < gamma <= 1:
        raise ValidationError("gamma must lie in (0, 1]")
    g = np.asarray(g, dtype=float).reshape(-1)
    if times is None:
        times = np.linspace(0.0, 1.0, g.size)
    sup, hol, l2 = pl_norms(g, times, gamma)
    rhs = float(interpolation_rhs(hol, l2, gamma, form))
    applicable = l2 < 1.0
    ok = sup <= rhs * (1 + rtol) + 1e-300
    return {
        "lhs": sup,
        "rhs": rhs,
        "holder": hol,
        "l2_squared": l2,
        "applicable": bool(applicable),
        "pass": bool(ok) if applicable else None,
        "form": form,
    }


def random_admissible_paths(n_paths, gamma, seed=0, max_knots=64):
    """Random piecewise-linear paths on [0, 1] with |g|_{L^2}^2 < 1.

    Knot counts, knot positions and amplitudes vary over orders of magnitude
    (smooth bumps, narrow spikes, near-constants, random walks) so the sweep
    probes both regimes of the bound.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    for _ in range(n_paths):
        kind = rng.integers(4)
        m = int(rng.integers(2, max_knots + 1))
        t = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, m - 2)]))
        t = np.unique(t)
        if kind == 0:
            g = rng.standard_normal(t.size)
        elif kind == 1:
            g = np.cumsum(rng.standard_normal(t.size)) / np.sqrt(t.size)
        elif kind == 2:
            g = np.full(t.size, rng.standard_normal())
            g[rng.integers(t.size)] += 10 * rng.standard_normal()
        else:
            g = np.full(t.size, 1.0) + 1e-3 * rng.standard_normal(t.size)
        _, _, l2 = pl_norms(g, t, gamma)
        target = 10.0 ** rng.uniform(-8, np.log10(0.999))
        g = g * np.sqrt(target / max(l2, 1e-300))
        yield t, g
