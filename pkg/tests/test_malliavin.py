import warnings
from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import expm

from mrl.errors import NumericalDegradationWarning
from mrl.malliavin import (
    factorized_vs_direct_check,
    fv_decomposition_check,
    gamma_direct,
    gaussian_degeneration_gap,
    malliavin_X,
    malliavin_Y,
    reduced_matrix,
)
from mrl.model import fields_from_catalog, from_catalog
from mrl.path_sim import make_driver, make_drivers, simulate_flow, simulate_X
from mrl.rough_core import midpoint_lift, solve_jacobian_rde, solve_rde

pytestmark = pytest.mark.filterwarnings("ignore::mrl.errors.NumericalDegradationWarning")


def _run(diffusion, fields, drv, stride=1, y0=None):
    spec = from_catalog(diffusion, drv.d) if isinstance(diffusion, str) else diffusion
    X = simulate_X(spec, drv, np.zeros(spec.d))
    flow = simulate_flow(spec, drv, X)
    rp = midpoint_lift(X, stride)
    Y = solve_rde(fields, rp, np.zeros(fields.m) if y0 is None else np.asarray(y0, float), record_remainder=False)
    JY = solve_jacobian_rde(fields, rp, Y)
    return spec, flow, rp, Y, JY


# ---------------------------------------------------------------------------
# D X
# ---------------------------------------------------------------------------


def test_malliavin_X_identity_is_indicator():
    drv = make_driver(0, 0, 64, 2)
    spec = from_catalog("identity", 2)
    flow = simulate_flow(spec, drv, simulate_X(spec, drv, np.zeros(2)))
    D = malliavin_X(flow, spec).dense()
    tri = np.tril(np.ones((65, 65)))
    assert np.array_equal(D, tri[:, :, None, None] * np.eye(2))


def test_malliavin_zero_above_diagonal():
    drv = make_driver(1, 0, 64, 2)
    spec, flow, rp, Y, JY = _run("trig_perturbed", fields_from_catalog("hormander_pair", 2), drv)
    DX = malliavin_X(flow, spec).dense()
    DY = malliavin_Y(fields_from_catalog("hormander_pair", 2), rp, Y, JY, flow, spec).dense()
    upper = np.triu(np.ones((65, 65), dtype=bool), 1)
    assert np.all(DX[upper] == 0) and np.all(DY[upper] == 0)


def test_malliavin_X_bump_direction():
    spec = from_catalog("trig_perturbed", 2)
    N = 2**10
    worst = 0.0
    for p in range(3):
        drv = make_driver(2, p, N, 2)
        X = simulate_X(spec, drv, np.zeros(2))
        DX = malliavin_X(simulate_flow(spec, drv, X), spec)
        for u, j in [(0.5, 0), (1.0, 1)]:
            h = np.zeros((N, 2))
            h[: int(u * N), j] = 1.0 / N

            def q(eps):
                return (simulate_X(spec, drv.perturbed(h, eps), np.zeros(2)).values[-1] - X.values[-1]) / eps

            rich = 2 * q(5e-4) - q(1e-3)
            rs = np.arange(int(u * N))
            mall = DX.value(np.full_like(rs, N), rs)[:, :, j].sum(axis=0) / N
            worst = max(worst, np.abs(rich - mall).max() / np.abs(mall).max())
    assert worst <= 0.01


# ---------------------------------------------------------------------------
# D Y
# ---------------------------------------------------------------------------


def test_gaussian_case_reduces_to_jacobian_transport():
    fields = fields_from_catalog("trig_pair", 2)
    drv = make_driver(3, 0, 2**9, 2)
    spec, flow, rp, Y, JY = _run("identity", fields, drv, 4)
    DY = malliavin_Y(fields, rp, Y, JY, flow, spec)
    assert gaussian_degeneration_gap(DY, JY, Y) <= 1e-10


def test_factorized_vs_direct_constant_and_catalog():
    fields = fields_from_catalog("hormander_pair", 2)
    drv = make_driver(4, 0, 2**8, 2)
    spec, flow, rp, Y, JY = _run("identity", fields, drv, 2)
    assert factorized_vs_direct_check(fields, rp, Y, JY, flow, spec, np.arange(0, rp.n, 8)) <= 1e-10
    spec, flow, rp, Y, JY = _run("trig_perturbed", fields, drv, 2)
    assert factorized_vs_direct_check(fields, rp, Y, JY, flow, spec, np.arange(0, rp.n, 8)) <= 1e-8


def test_factorized_vs_direct_detects_corrupted_inverse():
    fields = fields_from_catalog("hormander_pair", 2)
    drv = make_driver(4, 1, 2**8, 2)
    spec, flow, rp, Y, JY = _run("trig_perturbed", fields, drv, 1)
    delta = 1e-4
    Ji = flow.J_inv.copy()
    Ji[10] += delta
    bad = replace(flow, J_inv=Ji)
    gap = factorized_vs_direct_check(fields, rp, Y, JY, bad, spec, [10])
    assert 1e-3 * delta < gap < 1e3 * delta


# ---------------------------------------------------------------------------
# Malliavin matrices
# ---------------------------------------------------------------------------


def test_gamma_forced_identity_times_t():
    fields = fields_from_catalog("coordinate", 2)
    drv = make_drivers(5, np.arange(3), 2**8, 2)
    spec, flow, rp, Y, JY = _run("identity", fields, drv)
    DY = malliavin_Y(fields, rp, Y, JY, flow, spec)
    for ti, t in ((rp.n, 1.0), (rp.n // 4, 0.25)):
        pair = reduced_matrix(DY, JY, ti)
        assert np.abs(pair.Gamma - t * np.eye(2)).max() <= 1e-12
        assert np.allclose(pair.lambda_min_C, t, atol=1e-12)


def test_gamma_scalar_linear_closed_form():
    fields = fields_from_catalog("scalar_linear", 1)
    drv = make_drivers(6, np.arange(4), 2**10, 1)
    spec, flow, rp, Y, JY = _run("identity", fields, drv, 1, y0=[1.3])
    DY = malliavin_Y(fields, rp, Y, JY, flow, spec)
    pair = reduced_matrix(DY, JY, rp.n)
    want = Y.Y[:, -1, 0] ** 2
    assert np.allclose(pair.Gamma[:, 0, 0], want, rtol=1e-2)


@pytest.mark.parametrize("diffusion,cid", [("trig_perturbed", "hormander_pair"), ("rotating", "trig_pair")])
def test_gamma_two_routes(diffusion, cid):
    fields = fields_from_catalog(cid, 2)
    drv = make_drivers(7, np.arange(2), 2**9, 2)
    spec, flow, rp, Y, JY = _run(diffusion, fields, drv, 2)
    DY = malliavin_Y(fields, rp, Y, JY, flow, spec)
    pair = reduced_matrix(DY, JY, rp.n)
    direct = gamma_direct(DY, rp.n)
    assert np.abs(pair.Gamma - direct).max() <= 1e-8 * np.abs(direct).max()
    assert np.all(pair.eig_C >= -1e-12)


# ---------------------------------------------------------------------------
# f_v bracket decomposition
# ---------------------------------------------------------------------------


def test_fv_constant_fields():
    fields = fields_from_catalog("coordinate", 2)
    drv = make_driver(8, 0, 2**8, 2)
    _, _, rp, Y, JY = _run("identity", fields, drv)
    assert fv_decomposition_check(fields, rp, Y, JY, [0.6, 0.8]) <= 1e-12


def test_fv_commuting_linear_fields():
    M1 = np.diag([0.5, -0.3])
    M2 = np.diag([0.2, 0.7])
    params = np.concatenate([np.zeros(4), M1.ravel(), M2.ravel()])
    fields = fields_from_catalog("linear", 2, params)
    drv = make_driver(9, 0, 2**12, 2)
    _, _, rp, Y, JY = _run("identity", fields, drv, 4, y0=[1.0, 1.0])
    assert fv_decomposition_check(fields, rp, Y, JY, [0.6, 0.8]) <= 1e-2
    X = rp.X[-1] - rp.X[0]
    assert np.allclose(JY.J_fwd[-1], expm(M1 * X[0] + M2 * X[1]), rtol=1e-2)


def test_fv_hormander_pair_small_defect():
    fields = fields_from_catalog("hormander_pair", 2)
    drv = make_driver(10, 0, 2**10, 2)
    _, _, rp, Y, JY = _run("identity", fields, drv, 4)
    assert fv_decomposition_check(fields, rp, Y, JY, [0.6, 0.8]) <= 5e-3
