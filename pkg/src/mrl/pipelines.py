"""Per-path pipeline stages and their reducers.

Every Monte Carlo pipeline provides
  columns(cfg)            -> metric column names of its per-path summary,
  compute(cfg, indices)   -> (metrics {name: (B,) array}, codes [list per path], excluded (B,) bool),
  finalize(cfg, agg)      -> (report dict for JSON, {csv name: (columns, rows)}, checks {name: bool}).
Paths are computed in batches; a batch depends only on (config, indices).
"""

import functools
import json
import warnings

import numpy as np

from .config import canonical_json
from .errors import NumericalDegradationWarning, ValidationError
from .estimators.density import ball_grid, gaussian_bound_fit, kde_density
from .estimators.jacobian_probe import jacobian_nondegeneracy_probe, probe_quantities
from .estimators.roughness import roughness_modulus
from .estimators.smallball import bridge_survival, smallball_report, window_inf_sup
from .estimators.tails import tail_report
from .malliavin import malliavin_Y, reduced_matrix
from .model import fields_from_catalog, from_catalog
from .path_sim import COMPOSITION_TOL, condition_scale, make_drivers, simulate_flow, simulate_X
from .rough_core import holder_norms, level2_scale, midpoint_lift, solve_jacobian_rde, solve_rde


@functools.lru_cache(maxsize=8)
def _models(cfg_json):
    cfg = json.loads(cfg_json)
    dc = cfg["diffusion"]
    spec = from_catalog(dc["catalog_id"], dc["d"], dc.get("params", []), dc["convention"])
    fc = cfg["fields"]
    fields = fields_from_catalog(fc["catalog_id"], dc["d"], fc.get("params", []))
    return spec, fields


def models(cfg):
    return _models(canonical_json(cfg))


def _x0(cfg, d):
    return np.asarray(cfg.get("x0", np.zeros(d)), dtype=float)


def _y0(cfg, m):
    return np.asarray(cfg.get("y0", np.zeros(m)), dtype=float)


def _stride(cfg):
    return cfg["N"] // cfg["N_coarse"]


def _t_index(cfg, n):
    return int(round(cfg["t"] * n))


def _simulate(cfg, idx, with_flow=True):
    spec, _ = models(cfg)
    drv = make_drivers(cfg["seed"], idx, cfg["N"], spec.d)
    X = simulate_X(spec, drv, _x0(cfg, spec.d), cfg["diffusion"]["scheme"])
    flow = None
    codes = [[] for _ in idx]
    excluded = np.zeros(len(idx), dtype=bool)
    if with_flow:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NumericalDegradationWarning)
            flow = simulate_flow(spec, drv, X)
        limit = COMPOSITION_TOL * condition_scale(flow.J_fwd, flow.J_inv)
        if caught:
            for b in np.flatnonzero(np.atleast_1d(flow.sde_defect) > limit):
                codes[b].append("inverse_fallback")
        for b in np.flatnonzero(np.atleast_1d(flow.defect) > limit):
            codes[b].append("composition")
            excluded[b] = True
    return spec, X, flow, codes, excluded


def _solve(cfg, idx):
    spec, fields = models(cfg)
    _, X, flow, codes, excluded = _simulate(cfg, idx, with_flow=True)
    rp = midpoint_lift(X, _stride(cfg), cfg["estimators"]["alpha"])
    Y = solve_rde(fields, rp, _y0(cfg, fields.m), record_remainder=False)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always", NumericalDegradationWarning)
        JY = solve_jacobian_rde(fields, rp, Y)
    limit = COMPOSITION_TOL * condition_scale(JY.J_fwd, JY.J_inv)
    for b in np.flatnonzero(np.atleast_1d(JY.defect) > limit):
        codes[b].append("composition_Y")
        excluded[b] = True
    return spec, fields, X, flow, rp, Y, JY, codes, excluded


def _coords(prefix, arr):
    return {f"{prefix}_{i + 1}": arr[:, i] for i in range(arr.shape[-1])}


def _stats(agg):
    out = {}
    for name in agg.columns:
        v = agg.column(name)
        if v.size:
            out[name] = {
                "mean": agg.mean(name),
                "min": float(v.min()),
                "median": float(np.median(v)),
                "max": float(v.max()),
            }
    return out


def _tail_table(rep):
    cols = ["eps", "count", "n_paths", "p", "ci_low", "ci_high", "p_monotone"]
    return cols, list(rep.rows())


def _tail_json(rep):
    return {
        "quantity_id": rep.quantity_id,
        "n_paths": rep.n_paths,
        "n_excluded": rep.n_excluded,
        "fitted_exponent": rep.fitted_exponent,
        "fit_range": list(rep.fit_range),
        "fit_kind": rep.fit_kind,
        "rows": list(rep.rows()),
    }


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def simulate_columns(cfg):
    d = cfg["diffusion"]["d"]
    return [f"X_{i + 1}" for i in range(d)] + ["phi_sup", "flow_defect"]


def simulate_compute(cfg, idx):
    spec, X, flow, codes, excluded = _simulate(cfg, idx)
    ti = _t_index(cfg, cfg["N"])
    m = _coords("X", X.values[:, ti, :])
    m["phi_sup"] = np.atleast_1d(flow.phi_sup)
    m["flow_defect"] = np.atleast_1d(flow.defect)
    return m, codes, excluded


def simulate_finalize(cfg, agg):
    return {"stats": _stats(agg)}, {}, {}


# ---------------------------------------------------------------------------
# lift: Chen and symmetry identities, Hölder norms
# ---------------------------------------------------------------------------


def lift_columns(cfg):
    return ["chen_defect", "symmetry_defect", "norm_X_alpha", "norm_XX_2alpha"]


def _triples(cfg, n):
    rng = np.random.default_rng([cfg["seed"], 0x4C494654])
    tr = np.sort(rng.integers(0, n + 1, size=(cfg["estimators"]["n_triples"], 3)), axis=1)
    return tr


def lift_compute(cfg, idx):
    _, X, _, codes, excluded = _simulate(cfg, idx, with_flow=False)
    alpha = cfg["estimators"]["alpha"]
    rp = midpoint_lift(X, _stride(cfg), alpha)
    tr = _triples(cfg, rp.n)
    s, u, t = tr[:, 0], tr[:, 1], tr[:, 2]
    chen = rp.area_from_steps(s, t) - rp.area(s, u) - rp.area(u, t) - rp.inc(s, u)[..., :, None] * rp.inc(u, t)[..., None, :]
    A = rp.area(s, t)
    x = rp.inc(s, t)
    sym = 0.5 * (A + np.swapaxes(A, -1, -2)) - 0.5 * x[..., :, None] * x[..., None, :]
    B = len(idx)
    scale = np.empty(B)
    nx = np.empty(B)
    nxx = np.empty(B)
    for b in range(B):
        one = type(rp)(rp.grid, rp.X[b], rp.XX0[b], rp.step_areas[b], alpha, rp.meta)
        scale[b] = level2_scale(one)
        h = holder_norms(one, alpha, mode="dyadic")
        nx[b], nxx[b] = h.norm_X_alpha, h.norm_XX_2alpha
    m = {
        "chen_defect": np.linalg.norm(chen, axis=(-2, -1)).max(axis=-1) / scale,
        "symmetry_defect": np.linalg.norm(sym, axis=(-2, -1)).max(axis=-1) / scale,
        "norm_X_alpha": nx,
        "norm_XX_2alpha": nxx,
    }
    return m, codes, excluded


def lift_finalize(cfg, agg):
    chen = agg.column("chen_defect")
    sym = agg.column("symmetry_defect")
    checks = {
        "chen_relative_le_1e-12": bool(chen.size == 0 or chen.max() <= 1e-12),
        "symmetry_relative_le_1e-10": bool(sym.size == 0 or sym.max() <= 1e-10),
    }
    return {"stats": _stats(agg)}, {}, checks


# ---------------------------------------------------------------------------
# solve: Y and J^Y
# ---------------------------------------------------------------------------


def solve_columns(cfg):
    _, fields = models(cfg)
    return [f"Y_{i + 1}" for i in range(fields.m)] + ["jy_defect"]


def solve_compute(cfg, idx):
    *_, rp, Y, JY, codes, excluded = _solve(cfg, idx)
    ti = _t_index(cfg, rp.n)
    m = _coords("Y", Y.Y[:, ti, :])
    m["jy_defect"] = np.atleast_1d(JY.defect)
    return m, codes, excluded


solve_finalize = simulate_finalize


# ---------------------------------------------------------------------------
# malliavin / eigen_tail
# ---------------------------------------------------------------------------


def malliavin_columns(cfg):
    _, fields = models(cfg)
    return ["lambda_min_C", "lambda_min_Gamma", "trace_C"] + [f"Y_{i + 1}" for i in range(fields.m)]


def malliavin_compute(cfg, idx):
    spec, fields, X, flow, rp, Y, JY, codes, excluded = _solve(cfg, idx)
    DY = malliavin_Y(fields, rp, Y, JY, flow, spec)
    ti = _t_index(cfg, rp.n)
    pair = reduced_matrix(DY, JY, ti, raise_on_negative=False)
    for b in np.flatnonzero(np.atleast_1d(pair.negative)):
        codes[b].append("negative_eigenvalue")
        excluded[b] = True
    m = {
        "lambda_min_C": np.atleast_1d(pair.lambda_min_C),
        "lambda_min_Gamma": np.atleast_1d(pair.lambda_min_Gamma),
        "trace_C": np.trace(pair.C, axis1=-2, axis2=-1),
    }
    m.update(_coords("Y", Y.Y[:, ti, :]))
    return m, codes, excluded


def malliavin_finalize(cfg, agg):
    est = cfg["estimators"]
    rep = tail_report(agg.column("lambda_min_C"), est["eps_grid"], "lambda_min_C",
                      n_excluded=agg.n_excluded + agg.n_alarm, min_hits=est["min_hits"])
    checks = {"tail_monotone_after_regularization": bool(np.all(np.diff(rep.monotone) <= 0))}
    return {"stats": _stats(agg), "tail": _tail_json(rep)}, {"tail": _tail_table(rep)}, checks


# ---------------------------------------------------------------------------
# roughness
# ---------------------------------------------------------------------------


def roughness_columns(cfg):
    return ["D_hat", "L_lower"]


def roughness_compute(cfg, idx):
    _, X, _, codes, excluded = _simulate(cfg, idx, with_flow=False)
    est = cfg["estimators"]
    rep = roughness_modulus(X.values, est["theta"], est["n_max"], est["sphere_mesh"])
    return {"D_hat": np.atleast_1d(rep.D_hat), "L_lower": np.atleast_1d(rep.L_lower)}, codes, excluded


def roughness_finalize(cfg, agg):
    est = cfg["estimators"]
    rep = tail_report(agg.column("D_hat"), est["eps_grid"], "D_hat",
                      n_excluded=agg.n_excluded + agg.n_alarm, min_hits=est["min_hits"])
    return {"stats": _stats(agg), "tail": _tail_json(rep)}, {"tail": _tail_table(rep)}, {}


# ---------------------------------------------------------------------------
# smallball
# ---------------------------------------------------------------------------


def _bridge_sigma(cfg):
    spec, _ = models(cfg)
    if not cfg["estimators"]["bridge"] or spec.d != 1 or not spec.constant or spec.drift is not None:
        return None
    return float(np.sqrt(np.asarray(spec.coeff(np.zeros(1))).reshape(-1)[0]))


def smallball_columns(cfg):
    cols = ["q"]
    if _bridge_sigma(cfg) is not None:
        cols += [f"bridge_{i}" for i in range(len(cfg["estimators"]["eps_grid"]))]
    return cols


def smallball_compute(cfg, idx):
    _, X, _, codes, excluded = _simulate(cfg, idx, with_flow=False)
    est = cfg["estimators"]
    N = cfg["N"]
    si = int(round(est["s"] * N))
    ei = int(round((est["s"] + est["delta"]) * N))
    m = {"q": window_inf_sup(X.values, si, ei, est["sphere_mesh"])}
    sigma = _bridge_sigma(cfg)
    if sigma is not None:
        seg = X.values[:, si:ei + 1, 0] - X.values[:, si:si + 1, 0]
        for i, e in enumerate(est["eps_grid"]):
            m[f"bridge_{i}"] = bridge_survival(seg, e, sigma, 1.0 / N)
    return m, codes, excluded


def smallball_finalize(cfg, agg):
    est = cfg["estimators"]
    weights = None
    if _bridge_sigma(cfg) is not None:
        weights = np.stack([agg.column(f"bridge_{i}") for i in range(len(est["eps_grid"]))], axis=1)
    rep = smallball_report(agg.column("q"), est["eps_grid"], est["delta"], est["k"],
                           agg.n_excluded + agg.n_alarm, weights)
    cols, rows = _tail_table(rep)
    payload = _tail_json(rep)
    if weights is not None:
        cols = cols + ["p_bridge", "se_bridge"]
        for row, p, se in zip(rows, rep.extra["bridge_p"], rep.extra["bridge_se"]):
            row["p_bridge"], row["se_bridge"] = float(p), float(se)
        payload["rows"] = rows
    return {"tail": payload}, {"tail": (cols, rows)}, {}


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------


def density_columns(cfg):
    _, fields = models(cfg)
    return [f"Y_{i + 1}" for i in range(fields.m)]


def density_compute(cfg, idx):
    *_, rp, Y, JY, codes, excluded = _solve(cfg, idx)
    return _coords("Y", Y.Y[:, _t_index(cfg, rp.n), :]), codes, excluded


def density_finalize(cfg, agg):
    _, fields = models(cfg)
    est = cfg["estimators"]
    samples = np.stack([agg.column(f"Y_{i + 1}") for i in range(fields.m)], axis=1)
    y0 = _y0(cfg, fields.m)
    kde = kde_density(samples)
    grid = ball_grid(y0, est["radius"] * np.sqrt(cfg["t"]), est["grid_points"])
    fit = gaussian_bound_fit(kde, y0, cfg["t"], grid, est["eta"])
    payload = {
        "C1": fit.C1, "C2": fit.C2, "eta": fit.eta, "max_density": fit.max_density,
        "n_violations": len(fit.violations), "violations": fit.violations, "n_samples": int(samples.shape[0]),
    }
    return payload, {}, {"zero_violations": len(fit.violations) == 0, "C2_positive": fit.C2 > 0}


# ---------------------------------------------------------------------------
# jacobian_probe
# ---------------------------------------------------------------------------


def jacobian_probe_columns(cfg):
    return ["q1", "q2", "m"]


def _probe_direction(cfg, m):
    v = np.asarray(cfg["estimators"].get("v", np.eye(m)[0]), dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValidationError("estimators.v must be nonzero")
    return v / nv


def jacobian_probe_compute(cfg, idx):
    spec, fields, X, flow, rp, Y, JY, codes, excluded = _solve(cfg, idx)
    DY = malliavin_Y(fields, rp, Y, JY, flow, spec)
    q1, q2, m = probe_quantities(DY, _probe_direction(cfg, fields.m), _t_index(cfg, rp.n))
    return {"q1": q1, "q2": q2, "m": m}, codes, excluded


def jacobian_probe_finalize(cfg, agg):
    spec, _ = models(cfg)
    est = cfg["estimators"]
    t1, t2 = jacobian_nondegeneracy_probe(agg.column("q1"), agg.column("q2"), agg.column("m"),
                                          est["eps_grid"], est["beta"], degenerate=spec.constant)
    cols = ["eps", "n_condition", "n_exceed", "p_conditional"]
    payload = {
        t.quantity_id: {"beta": t.beta, "degenerate": t.degenerate, "note": t.note, "rows": list(t.rows())}
        for t in (t1, t2)
    }
    return payload, {"q1": (cols, list(t1.rows())), "q2": (cols, list(t2.rows()))}, {}


PIPELINES = {
    "simulate": (simulate_columns, simulate_compute, simulate_finalize),
    "lift": (lift_columns, lift_compute, lift_finalize),
    "solve": (solve_columns, solve_compute, solve_finalize),
    "malliavin": (malliavin_columns, malliavin_compute, malliavin_finalize),
    "eigen_tail": (malliavin_columns, malliavin_compute, malliavin_finalize),
    "roughness": (roughness_columns, roughness_compute, roughness_finalize),
    "smallball": (smallball_columns, smallball_compute, smallball_finalize),
    "density": (density_columns, density_compute, density_finalize),
    "jacobian_probe": (jacobian_probe_columns, jacobian_probe_compute, jacobian_probe_finalize),
}


def get(pipeline):
    if pipeline not in PIPELINES:
        raise ValidationError(f"pipeline {pipeline!r} has no Monte Carlo stage")
    return PIPELINES[pipeline]
