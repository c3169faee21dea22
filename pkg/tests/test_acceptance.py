"""Acceptance criteria 1-13, each at its stated tolerance and scale.

Every test records one PASS/FAIL line (shown in the terminal summary) and then
asserts the verdict. Monte Carlo criteria go through the harness so their CSV
artifacts can be compared across worker counts in criterion 13.
"""

import filecmp
import os
import time
import warnings

import numpy as np
import pytest

from mrl.errors import NumericalDegradationWarning
from mrl.estimators.interpolation import interpolation_check, random_admissible_paths
from mrl.estimators.smallball import confinement_images, confinement_series
from mrl.malliavin import (
    factorized_vs_direct_check,
    fv_decomposition_check,
    gaussian_degeneration_gap,
    malliavin_Y,
)
from mrl.mc_harness import ExperimentPlan, run_plan
from mrl.model import fields_from_catalog, from_catalog
from mrl.path_sim import SamplePath, make_driver, make_drivers, simulate_flow, simulate_X, uniform_grid
from mrl.rough_core import dyadic_pairs, midpoint_lift, solve_jacobian_rde, solve_rde

pytestmark = [pytest.mark.acceptance, pytest.mark.filterwarnings("ignore::mrl.errors.NumericalDegradationWarning")]

SEED = 20240601


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _pipeline(spec, fields, drv, stride, y0=None):
    X = simulate_X(spec, drv, np.zeros(spec.d))
    flow = simulate_flow(spec, drv, X)
    rp = midpoint_lift(X, stride)
    Y = solve_rde(fields, rp, np.zeros(fields.m) if y0 is None else y0, record_remainder=False)
    JY = solve_jacobian_rde(fields, rp, Y)
    return X, flow, rp, Y, JY


# ---------------------------------------------------------------------------
# 1. Chen and geometric identities
# ---------------------------------------------------------------------------

C1_CONFIG = {
    "version": 1, "pipeline": "lift", "seed": SEED, "n_paths": 100, "N": 2**14, "N_coarse": 2**10,
    "batch_size": 25, "diffusion": {"catalog_id": "trig_perturbed", "d": 2},
    "estimators": {"n_triples": 1000},
}


def test_criterion_01_chen_and_symmetry(outdir, record_criterion):
    t0 = time.perf_counter()
    res = run_plan(ExperimentPlan(C1_CONFIG, str(outdir / "c1_w1")), workers=1)
    elapsed = time.perf_counter() - t0
    chen = res.aggregate.column("chen_defect").max()
    sym = res.aggregate.column("symmetry_defect").max()
    ok = res.aggregate.n_ok == 100 and chen <= 1e-12 and sym <= 1e-10 and elapsed <= 120
    record_criterion(1, ok, f"100 paths: max chen/scale={chen:.2e} (<=1e-12), max sym/scale={sym:.2e} "
                            f"(<=1e-10), {elapsed:.1f}s (<=120s)")
    assert ok


# ---------------------------------------------------------------------------
# 2. Linear-path lift
# ---------------------------------------------------------------------------


def test_criterion_02_linear_path_lift(record_criterion):
    rng = np.random.default_rng(SEED)
    N = 2**10
    grid = uniform_grid(N)
    pr = dyadic_pairs(N)
    s, t = pr[:, 0], pr[:, 1]
    worst = 0.0
    for _ in range(20):
        v = rng.standard_normal(3)
        rp = midpoint_lift(SamplePath(grid, grid[:, None] * v[None, :]))
        want = 0.5 * ((grid[t] - grid[s]) ** 2)[:, None, None] * np.outer(v, v)
        worst = max(worst, float(np.abs(rp.area(s, t) - want).max()))
    ok = worst <= 1e-12
    record_criterion(2, ok, f"20 random v, {len(pr)} dyadic pairs: max |XX - (t-s)^2 v v^T/2| = {worst:.2e} (<=1e-12)")
    assert ok


# ---------------------------------------------------------------------------
# 3. Gaussian degeneration
# ---------------------------------------------------------------------------


def test_criterion_03_gaussian_degeneration(record_criterion):
    spec = from_catalog("identity", 2)
    fields = fields_from_catalog("hormander_pair", 2)
    t0 = time.perf_counter()
    worst = 0.0
    for p in range(50):
        drv = make_driver(SEED, p, 2**14, 2)
        X, flow, rp, Y, JY = _pipeline(spec, fields, drv, 16)
        DY = malliavin_Y(fields, rp, Y, JY, flow, spec)
        worst = max(worst, gaussian_degeneration_gap(DY, JY, Y))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-3 and elapsed <= 300
    record_criterion(3, ok, f"a=I, Hormander pair, N=2^14 (coarse 2^10), 50 paths: "
                            f"max |D_rY_t - J_(t<-r)V(Y_r)| = {worst:.2e} (<=1e-3), {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 4. Factorized vs direct
# ---------------------------------------------------------------------------


def test_criterion_04_factorized_vs_direct(record_criterion):
    spec = from_catalog("trig_perturbed", 2)
    fields = fields_from_catalog("hormander_pair", 2)
    t0 = time.perf_counter()
    worst = 0.0
    for p in range(10):
        drv = make_driver(SEED, p, 2**10, 2)
        X, flow, rp, Y, JY = _pipeline(spec, fields, drv, 4)
        rs = np.arange(0, rp.n, 16)
        worst = max(worst, factorized_vs_direct_check(fields, rp, Y, JY, flow, spec, rs))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed <= 60
    record_criterion(4, ok, f"trig-perturbed a, N=2^10, d=2, 10 paths: max relative gap = {worst:.2e} "
                            f"(<=1e-8), {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 5. Bump-direction oracle
# ---------------------------------------------------------------------------


def test_criterion_05_bump_direction(record_criterion):
    spec = from_catalog("trig_perturbed", 2)
    fields = fields_from_catalog("hormander_pair", 2)
    N = 2**12
    directions = [(0.5, 0), (1.0, 1), (0.25, 1)]
    t0 = time.perf_counter()
    worst = 0.0
    for p in range(10):
        drv = make_driver(SEED, p, N, 2)
        X, flow, rp, Y, JY = _pipeline(spec, fields, drv, 1)
        DY = malliavin_Y(fields, rp, Y, JY, flow, spec)
        for u, j in directions:
            h = np.zeros((N, 2))
            h[: int(u * N), j] = 1.0 / N

            def quotient(eps):
                Ye = _pipeline(spec, fields, drv.perturbed(h, eps), 1)[3].Y[-1]
                return (Ye - Y.Y[-1]) / eps

            richardson = 2.0 * quotient(5e-4) - quotient(1e-3)
            rs = np.arange(int(u * rp.n))
            mall = DY.value(np.full_like(rs, rp.n), rs)[:, :, j].sum(axis=0) / rp.n
            worst = max(worst, float(np.abs(richardson - mall).max() / np.abs(mall).max()))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.02 and elapsed <= 300
    record_criterion(5, ok, f"trig-perturbed a, Hormander pair, N=2^12, 10 paths x 3 (u,j): "
                            f"max relative gap = {worst:.2e} (<=2e-2), {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 6. Forced Malliavin matrix
# ---------------------------------------------------------------------------


def test_criterion_06_forced_malliavin_matrix(outdir, record_criterion):
    cfg = {"version": 1, "pipeline": "malliavin", "seed": SEED, "n_paths": 100, "N": 2**10,
           "N_coarse": 2**10, "diffusion": {"catalog_id": "identity", "d": 2},
           "fields": {"catalog_id": "coordinate"}}
    from mrl.malliavin import reduced_matrix

    spec = from_catalog("identity", 2)
    fields = fields_from_catalog("coordinate", 2)
    drv = make_drivers(SEED, np.arange(100), 2**10, 2)
    X = simulate_X(spec, drv, np.zeros(2))
    flow = simulate_flow(spec, drv, X)
    rp = midpoint_lift(X, 1)
    Y = solve_rde(fields, rp, np.zeros(2), record_remainder=False)
    JY = solve_jacobian_rde(fields, rp, Y)
    pair = reduced_matrix(malliavin_Y(fields, rp, Y, JY, flow, spec), JY, rp.n)
    worst = float(np.abs(pair.Gamma - np.eye(2)).max())
    res = run_plan(ExperimentPlan(cfg, str(outdir / "c6")), workers=1)
    lam = res.aggregate.column("lambda_min_Gamma")
    ok = worst <= 1e-10 and np.all(np.abs(lam - 1.0) <= 1e-10)
    record_criterion(6, ok, f"a=I, V_i=e_i, t=1, 100 paths: max |Gamma - I| = {worst:.2e} (<=1e-10)")
    assert ok


# ---------------------------------------------------------------------------
# 7. f_v bracket decomposition
# ---------------------------------------------------------------------------


def _fv_defects(catalog, Ns, n_paths=20):
    spec = from_catalog("identity", 2)
    fields = fields_from_catalog(catalog, 2)
    v = np.array([0.6, 0.8])
    out = []
    for N in Ns:
        drv = make_drivers(SEED, np.arange(n_paths), N, 2)
        X = simulate_X(spec, drv, np.zeros(2))
        rp = midpoint_lift(X, 16)
        Y = solve_rde(fields, rp, np.zeros(2), record_remainder=False)
        JY = solve_jacobian_rde(fields, rp, Y)
        out.append(fv_decomposition_check(fields, rp, Y, JY, v))
    return out


def test_criterion_07_fv_decomposition(record_criterion):
    t0 = time.perf_counter()
    d14, d15 = _fv_defects("hormander_pair", (2**14, 2**15))
    elapsed = time.perf_counter() - t0
    ratio = d14 / d15 if d15 > 0 else float("inf")
    ok = d14 <= 5e-3 and ratio >= 1.7 and elapsed <= 600
    record_criterion(7, ok, f"Hormander pair, 20 paths, stride 16: defect(2^14)={d14:.2e} (<=5e-3), "
                            f"defect(2^15)={d15:.2e}, ratio={ratio:.2f} (>=1.7); both at rounding level")
    c14, c15 = _fv_defects("trig_pair", (2**14, 2**15))
    record_criterion(7, c14 <= 5e-3 and c14 / c15 >= 1.7,
                     f"trig pair (inexact scheme): defect {c14:.2e} -> {c15:.2e}, ratio {c14 / c15:.2f}",
                     companion=True)
    assert ok


# ---------------------------------------------------------------------------
# 8. Eigenvalue tail
# ---------------------------------------------------------------------------

C8_EPS = [float(10 ** (-k / 4)) for k in range(0, 25)]


def test_criterion_08_eigenvalue_tail(outdir, record_criterion):
    base = {"version": 1, "pipeline": "eigen_tail", "seed": SEED, "N": 2**12, "N_coarse": 2**10,
            "batch_size": 64, "diffusion": {"catalog_id": "identity", "d": 2},
            "estimators": {"eps_grid": C8_EPS, "min_hits": 30}}
    t0 = time.perf_counter()
    res = run_plan(ExperimentPlan(dict(base, n_paths=20000), str(outdir / "c8")), workers=1)
    elapsed = time.perf_counter() - t0
    tail = res.report["tail"]
    slope = tail["fitted_exponent"]
    lo, hi = tail["fit_range"]
    ctrl_cfg = dict(base, n_paths=2000, fields={"catalog_id": "degenerate_pair"})
    ctrl = run_plan(ExperimentPlan(ctrl_cfg, str(outdir / "c8_ctrl")), workers=1)
    ctrl_p = [r["p"] for r in ctrl.report["tail"]["rows"]]
    ok = slope >= 2 and all(p == 1.0 for p in ctrl_p) and elapsed <= 1800
    record_criterion(8, ok, f"2e4 paths, N=2^12: log-log slope {slope:.2f} on the smallest decade with >=30 hits "
                            f"[{lo:.3g}, {hi:.3g}] (>=2); degenerate control P=1 on all eps: "
                            f"{all(p == 1.0 for p in ctrl_p)}; {elapsed:.0f}s")

    rows = tail["rows"]
    eps = np.array([r["eps"] for r in rows])
    p = np.array([r["p"] for r in rows])
    cnt = np.array([r["count"] for r in rows])
    sel = (p <= 0.5) & (cnt >= 30)
    local = float(np.polyfit(np.log(eps[sel]), np.log(p[sel]), 1)[0]) if sel.sum() >= 2 else float("nan")
    record_criterion(8, local >= 2, f"slope below the median only (eps in [{eps[sel].min():.3g}, "
                                    f"{eps[sel].max():.3g}]): {local:.2f}", companion=True)

    # closed form for this system with y0 = 0: K_r = [[1, 0], [-X2_r, X1_r]]
    n = 2**10
    idx = np.arange(200)
    drv = make_drivers(SEED, idx, 2**12, 2)
    Xc = drv.cumulative()[:, ::4, :]
    K = np.zeros((idx.size, n, 2, 2))
    K[:, :, 0, 0] = 1.0
    K[:, :, 1, 0] = -Xc[:, :n, 1]
    K[:, :, 1, 1] = Xc[:, :n, 0]
    C = np.einsum("prad,prbd->pab", K, K) / n
    lam = np.linalg.eigvalsh(C)[:, 0]
    got = res.aggregate.column("lambda_min_C")[:200]
    gap = float(np.abs(got - lam).max())
    record_criterion(8, gap <= 1e-10, f"closed-form K_r oracle on 200 paths: max |lambda_min gap| = {gap:.2e}",
                     companion=True)
    assert ok


# ---------------------------------------------------------------------------
# 9. Small-ball probabilities
# ---------------------------------------------------------------------------

C9_CONFIG = {
    "version": 1, "pipeline": "smallball", "seed": SEED, "n_paths": 100000, "N": 2**10, "N_coarse": 2**10,
    "batch_size": 5000, "diffusion": {"catalog_id": "identity", "d": 1},
    "estimators": {"eps_grid": [1.0, 0.5, 0.25], "delta": 1.0, "s": 0.0, "bridge": True, "k": 0.5},
}


def test_criterion_09_smallball(outdir, record_criterion):
    t0 = time.perf_counter()
    res = run_plan(ExperimentPlan(C9_CONFIG, str(outdir / "c9")), workers=1)
    elapsed = time.perf_counter() - t0
    rows = res.report["tail"]["rows"]
    n = res.aggregate.n_ok
    parts, ok = [], elapsed <= 300
    for r in rows:
        oracle = float(confinement_series(r["eps"]))
        se = np.sqrt(oracle * (1 - oracle) / n)
        z = abs(r["p_bridge"] - oracle) / se
        ok &= bool(z <= 3)
        parts.append(f"eps={r['eps']}: est {r['p_bridge']:.4g} vs {oracle:.4g} ({z:.2f} SE)")
    record_criterion(9, ok, f"1e5 paths, N=2^10, bridge-weighted: " + "; ".join(parts) + f"; {elapsed:.0f}s")
    raw = "; ".join(f"eps={r['eps']}: {r['p']:.4g}" for r in rows)
    series_gap = float(np.abs(confinement_series(np.array([0.25, 0.5, 1.0]))
                              - confinement_images(np.array([0.25, 0.5, 1.0]))).max())
    record_criterion(9, series_gap <= 1e-12, f"raw grid-monitored frequencies (biased upward) {raw}; "
                                             f"series vs images gap {series_gap:.1e}", companion=True)
    assert ok


# ---------------------------------------------------------------------------
# 10. Roughness tail
# ---------------------------------------------------------------------------

C10_CONFIG = {
    "version": 1, "pipeline": "roughness", "seed": SEED, "n_paths": 1000, "N": 2**12, "N_coarse": 2**12,
    "batch_size": 100, "diffusion": {"catalog_id": "identity", "d": 2},
    "estimators": {"theta": 0.7, "n_max": 8, "sphere_mesh": 64},
}


def test_criterion_10_roughness_tail(outdir, record_criterion):
    t0 = time.perf_counter()
    res = run_plan(ExperimentPlan(C10_CONFIG, str(outdir / "c10_w1")), workers=1)
    elapsed = time.perf_counter() - t0
    D = res.aggregate.column("D_hat")
    eps0 = float(np.median(D))
    eps = [eps0, eps0 / 2, eps0 / 4]
    P = [float(np.mean(D < e)) for e in eps]
    drops = [P[1] <= P[0] / 5, P[2] <= P[1] / 5]
    ok = all(drops) and elapsed <= 300
    record_criterion(10, ok, f"1e3 paths, theta=0.7, n_max=8, eps0=median={eps0:.3f}: "
                             f"P = {P[0]:.3g}, {P[1]:.3g}, {P[2]:.3g}; each halving drops >=5x: {drops}; "
                             f"min D_hat={D.min():.3f}; {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 11. Interpolation inequality
# ---------------------------------------------------------------------------


def test_criterion_11_interpolation(record_criterion):
    gamma = 0.4
    t0 = time.perf_counter()
    fails = {"literal": 0, "homogeneous": 0}
    worst = {"literal": 0.0, "homogeneous": 0.0}
    for t, g in random_admissible_paths(10000, gamma, seed=SEED):
        for form in fails:
            r = interpolation_check(g, gamma, t, form=form)
            fails[form] += r["pass"] is False
            worst[form] = max(worst[form], r["lhs"] / max(r["rhs"], 1e-300))
    elapsed = time.perf_counter() - t0
    ok = fails["literal"] == 0 and elapsed <= 60
    record_criterion(11, ok, f"1e4 admissible paths, literal form: {fails['literal']} violations (need 0), "
                             f"worst lhs/rhs {worst['literal']:.3g}; {elapsed:.0f}s (both forms)")
    record_criterion(11, fails["homogeneous"] == 0,
                     f"scale-invariant form: {fails['homogeneous']} violations, worst lhs/rhs "
                     f"{worst['homogeneous']:.3g}", companion=True)
    assert ok


# ---------------------------------------------------------------------------
# 12. Density bound
# ---------------------------------------------------------------------------

C12_GAUSS = {
    "version": 1, "pipeline": "density", "seed": SEED, "n_paths": 100000, "N": 16, "N_coarse": 16,
    "batch_size": 10000, "diffusion": {"catalog_id": "identity", "d": 2}, "fields": {"catalog_id": "coordinate"},
    "estimators": {"radius": 3.0, "grid_points": 41, "eta": 0.05},
}
C12_HORMANDER = dict(C12_GAUSS, N=2**8, N_coarse=2**8, batch_size=2000, fields={"catalog_id": "hormander_pair"})


def test_criterion_12_density_bound(outdir, record_criterion):
    t0 = time.perf_counter()
    g = run_plan(ExperimentPlan(C12_GAUSS, str(outdir / "c12_gauss")), workers=1).report
    h = run_plan(ExperimentPlan(C12_HORMANDER, str(outdir / "c12_hormander")), workers=1).report
    elapsed = time.perf_counter() - t0
    ok = (0.45 <= g["C2"] <= 0.55 and g["n_violations"] == 0 and h["C2"] > 0 and h["n_violations"] == 0
          and elapsed <= 1200)
    record_criterion(12, ok, f"Gaussian case C2={g['C2']:.4f} in [0.45,0.55], violations {g['n_violations']}; "
                             f"Hormander system C2={h['C2']:.4f} > 0, violations {h['n_violations']}; "
                             f"{elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 13. Reproducibility across worker counts
# ---------------------------------------------------------------------------


def test_criterion_13_reproducibility(outdir, record_criterion):
    pairs = []
    for name, cfg in (("c1", C1_CONFIG), ("c10", C10_CONFIG)):
        a = outdir / f"{name}_w1"
        if not (a / "paths.csv").exists():
            run_plan(ExperimentPlan(cfg, str(a)), workers=1)
        b = outdir / f"{name}_w8"
        run_plan(ExperimentPlan(cfg, str(b)), workers=8)
        for fname in sorted(os.listdir(a)):
            if fname.endswith(".csv") and not fname.endswith(".log.csv"):
                pairs.append((name, fname, filecmp.cmp(a / fname, b / fname, shallow=False)))
        ra = np.genfromtxt(a / "paths.csv", delimiter=",", skip_header=2, usecols=(0, 3, 4))
        rb = np.genfromtxt(b / "paths.csv", delimiter=",", skip_header=2, usecols=(0, 3, 4))
        pairs.append((name, "rows<=1e-12", bool(np.allclose(ra, rb, rtol=1e-12, atol=0))))
    ok = all(same for *_, same in pairs)
    detail = ", ".join(f"{n}/{f}: {'identical' if s else 'DIFFER'}" for n, f, s in pairs)
    record_criterion(13, ok, f"workers 1 vs 8: {detail}")
    assert ok
