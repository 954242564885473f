"""Assembly, Newton solve, curl evaluation, Helmholtz split."""

from __future__ import annotations

import math

import numpy as np
import pytest

import curltd.material as mat
from curltd import fem
from curltd import generators as G
from curltd import kernels
from curltd import mesh as M
from curltd.errors import ConfigError, NonconvergenceError

PAIR = mat.MaterialPair()
SMAP = {M.IRON: mat.ONE, M.AIRGAP: mat.TWO, M.MAGNET: mat.TWO,
        M.AIR: mat.TWO}
AIR_ONLY = {M.AIR: mat.TWO}
SET = fem.SolveSettings()


@pytest.fixture(scope="module")
def motor():
    return G.generate(G.GeometrySpec(kind="toy-motor", h=0.125))


@pytest.fixture(scope="module")
def magnet_rows(motor):
    return fem.block_magnetization(
        motor, np.array([0.0, 4.0 * mat.NU0_DEFAULT, 0.0]))


@pytest.fixture(scope="module")
def box():
    return G.generate(G.GeometrySpec(kind="box", h=0.25))


def single_tet_mesh():
    verts = np.array([[0.0, 0, 0], [1.1, 0.1, 0], [0, 0.9, 0.2],
                      [0.1, 0, 1.3]])
    tets = np.array([[0, 1, 2, 3]])
    return M.build_edges(verts, tets, np.array([M.MAGNET]), None)


# ----------------------------------------------------------------------
# quadrature oracles


def monomial_integrals(verts):
    """Exact integrals of barycentric monomials lam_a lam_b over the tet,
    from the factorial formula int lam^alpha = 6|T| alpha! / (|alpha|+3)!."""
    d = verts[1:] - verts[0]
    vol = abs(np.linalg.det(d)) / 6.0
    out = np.empty((4, 4))
    for a in range(4):
        for b in range(4):
            out[a, b] = vol * (2.0 if a == b else 1.0) / 20.0
    return vol, out


def whitney_values(verts, x):
    """All six Whitney edge functions evaluated at point x (independent
    route: gradients from a linear solve, not cross products)."""
    A = np.concatenate([np.ones((4, 1)), verts], axis=1)
    coeffs = np.linalg.inv(A)              # row i: barycentric lam as affine
    lam = coeffs.T @ np.concatenate([[1.0], x])
    grads = coeffs[1:].T                   # (4,3): grad of lam_a
    vals = np.empty((6, 3))
    for e, (i, j) in enumerate(M.LOCAL_EDGES):
        vals[e] = lam[i] * grads[j] - lam[j] * grads[i]
    return vals


def quad_rule_deg2():
    """Four-point degree-2 tet rule in barycentric coordinates."""
    a = (5.0 - math.sqrt(5.0)) / 20.0
    b = (5.0 + 3.0 * math.sqrt(5.0)) / 20.0
    pts = np.full((4, 4), a)
    np.fill_diagonal(pts, b)
    w = np.full(4, 0.25)
    return pts, w


def test_mass_matrix_against_quadrature():
    m = single_tet_mesh()
    fs = fem.space(m)
    verts = m.vertices[m.tets[0]]

    # route 1: the degree-2 rule integrates the quadratic W_e.W_f exactly
    pts, w = quad_rule_deg2()
    vol = fs.vols[0]
    num = np.zeros((6, 6))
    for lam, wt in zip(pts, w):
        x = lam @ verts
        Wv = whitney_values(verts, x)
        num += wt * vol * (Wv @ Wv.T)
    signs = m.tet_edge_signs[0].astype(float)
    num *= signs[:, None] * signs[None, :]
    assert np.allclose(num, fs.mass[0], rtol=1e-12, atol=1e-15)

    # route 2: expand W_e.W_f into lam_a lam_b monomials with exact weights
    A = np.concatenate([np.ones((4, 1)), verts], axis=1)
    grads = np.linalg.inv(A)[1:].T
    _, lamlam = monomial_integrals(verts)
    ref = np.zeros((6, 6))
    for e, (i, j) in enumerate(M.LOCAL_EDGES):
        for f, (k, l) in enumerate(M.LOCAL_EDGES):
            ref[e, f] = (lamlam[i, k] * grads[j] @ grads[l]
                         - lamlam[i, l] * grads[j] @ grads[k]
                         - lamlam[j, k] * grads[i] @ grads[l]
                         + lamlam[j, l] * grads[i] @ grads[k])
    ref *= signs[:, None] * signs[None, :]
    assert np.allclose(ref, fs.mass[0], rtol=1e-12, atol=1e-15)


def test_linear_residual_matches_stiffness_action():
    m = single_tet_mesh()
    nu = 123.0
    pair = mat.MaterialPair(mode="linear", nu1=nu, nu2=nu)
    smap = {M.MAGNET: mat.TWO}
    fs = fem.space(m)
    for f in range(6):
        u = np.zeros(m.n_edges)
        u[f] = 1.0
        r = fem.assemble_residual(
            m, pair, smap, fem.DiscreteField(m, u.copy()), None,
            fem.SolveSettings(kappa=1e-30))
        expect = nu * fs.vols[0] * (fs.curlmat[0] @ fs.curlmat[0, f])
        free = ~fs.dofmap.constrained_mask
        assert np.allclose(r[free], expect[free], rtol=1e-12, atol=1e-9)


def test_magnet_load_closed_form():
    m = single_tet_mesh()
    mvec = np.array([0.3, -1.2, 2.0])
    r = fem.assemble_residual(m, PAIR, {M.MAGNET: mat.TWO},
                              fem.DiscreteField(m), mvec, SET)
    fs = fem.space(m)
    expect = -fs.vols[0] * (fs.curlmat[0] @ mvec)
    free = ~fs.dofmap.constrained_mask
    # single tet: every edge is on the boundary, so compare pre-BC shape
    out = np.zeros(m.n_edges)
    kernels.residual_accumulate(
        fs.curlmat, fs.mass, m.tet_edges, fs.vols,
        np.ascontiguousarray(-mvec[None, :]), np.zeros(m.n_edges), 0.0, out)
    assert np.allclose(out, expect, rtol=1e-13, atol=1e-13)
    assert np.all(r[fs.dofmap.constrained] == 0.0)
    assert np.allclose(r[free], expect[free], rtol=1e-13, atol=1e-13)


def test_zero_field_no_load_zero_residual(motor):
    r = fem.assemble_residual(motor, PAIR, SMAP, fem.DiscreteField(motor),
                              None, SET)
    assert np.all(r == 0.0)


def test_missing_region_mapping_rejected(motor):
    with pytest.raises(ConfigError):
        fem.assemble_residual(motor, PAIR, {M.IRON: mat.ONE},
                              fem.DiscreteField(motor), None, SET)


def test_magnetization_shape_rejected(motor):
    with pytest.raises(ConfigError):
        fem.assemble_residual(motor, PAIR, SMAP, fem.DiscreteField(motor),
                              np.ones((5, 3)), SET)


def test_field_length_rejected(motor):
    with pytest.raises(ConfigError):
        fem.DiscreteField(motor, np.zeros(3))


def test_settings_positive():
    with pytest.raises(ConfigError):
        fem.SolveSettings(kappa=0.0)
    with pytest.raises(ConfigError):
        fem.SolveSettings(newton_tol=-1e-8)


def test_jacobian_linear_independent_of_state(box):
    pair = mat.MaterialPair(mode="linear", nu1=5.0, nu2=5.0)
    rng = np.random.default_rng(0)
    J1 = fem.assemble_jacobian(box, pair, AIR_ONLY,
                               fem.DiscreteField(box), SET).matrix
    u = fem.DiscreteField(box, rng.normal(size=box.n_edges))
    J2 = fem.assemble_jacobian(box, pair, AIR_ONLY, u, SET).matrix
    assert abs(J1 - J2).max() <= 1e-9 * abs(J1).max()


def test_jacobian_symmetry(motor, magnet_rows):
    u, _ = fem.newton_solve(motor, PAIR, SMAP, magnet_rows, SET)
    J = fem.assemble_jacobian(motor, PAIR, SMAP, u, SET).matrix
    assert abs(J - J.T).max() <= 1e-12 * abs(J).max()


def test_jacobian_matches_finite_differences(box):
    rng = np.random.default_rng(42)
    u = rng.normal(scale=0.02, size=box.n_edges)
    v = rng.normal(size=box.n_edges)
    fs = fem.space(box)
    u[fs.dofmap.constrained] = 0.0
    v[fs.dofmap.constrained] = 0.0
    # the saturation side must be active, otherwise the problem is linear
    # and the secant matches the Jacobian identically
    pair = mat.MaterialPair()
    smap = {M.AIR: mat.ONE}
    J = fem.assemble_jacobian(box, pair, smap,
                              fem.DiscreteField(box, u.copy()), SET).matrix
    Jv = J @ v
    Jv[fs.dofmap.constrained] = 0.0
    r0 = fem.assemble_residual(box, pair, smap,
                               fem.DiscreteField(box, u.copy()), None, SET)
    hs = np.array([1e-3, 1e-4, 1e-5, 1e-6])
    errs = []
    for h in hs:
        rh = fem.assemble_residual(
            box, pair, smap, fem.DiscreteField(box, u + h * v), None, SET)
        errs.append(np.max(np.abs((rh - r0) / h - Jv)))
    errs = np.array(errs)
    # keep the points above the cancellation floor, then fit the order
    floor = 1e-7 * np.max(np.abs(Jv))
    keep = errs > floor
    assert keep.sum() >= 2
    slope = np.polyfit(np.log(hs[keep]), np.log(errs[keep]), 1)[0]
    assert slope >= 0.9


def test_newton_linear_single_iteration(motor, magnet_rows):
    pair = mat.MaterialPair(mode="linear", nu1=mat.NU0_DEFAULT / 500,
                            nu2=mat.NU0_DEFAULT)
    u, log = fem.newton_solve(motor, pair, SMAP, magnet_rows, SET)
    assert len(log) == 2          # initial residual + one accepted step
    assert log[-1]["alpha"] == 1.0
    assert np.linalg.norm(u.coefficients) > 0


def test_newton_warm_start_zero_iterations(motor, magnet_rows):
    u, log = fem.newton_solve(motor, PAIR, SMAP, magnet_rows, SET)
    u2, log2 = fem.newton_solve(motor, PAIR, SMAP, magnet_rows, SET,
                                initial=u)
    assert len(log2) == 1
    assert np.array_equal(u2.coefficients, u.coefficients)


def test_newton_saturation_converges(motor, magnet_rows):
    u, log = fem.newton_solve(motor, PAIR, SMAP, magnet_rows, SET)
    load = fem.assemble_residual(motor, PAIR, SMAP, fem.DiscreteField(motor),
                                 magnet_rows, SET)
    assert log[-1]["residual"] <= SET.newton_tol * np.linalg.norm(load)
    # residuals nonincreasing per the line-search contract
    res = [row["residual"] for row in log]
    assert all(b < a for a, b in zip(res, res[1:]))
    bmax = np.linalg.norm(fem.curl_field(u), axis=1).max()
    assert 0.5 < bmax < 2.5      # magnet scaled for a saturating but sane field


def test_newton_budget_exhaustion_carries_log(motor, magnet_rows):
    settings = fem.SolveSettings(newton_tol=1e-14, max_newton=1)
    with pytest.raises(NonconvergenceError) as err:
        fem.newton_solve(motor, PAIR, SMAP, magnet_rows, settings)
    assert len(err.value.log) >= 1
    assert err.value.log[0]["residual"] > 0


def test_curl_of_interpolated_linear_field(box):
    # u(x) = (0, c x_0, 0) has constant curl (0, 0, c) and lies in the
    # edge space; edge midpoint values give the exact interpolant
    c = 2.5
    mid = 0.5 * (box.vertices[box.edges[:, 0]] + box.vertices[box.edges[:, 1]])
    tang = box.vertices[box.edges[:, 1]] - box.vertices[box.edges[:, 0]]
    coeff = c * mid[:, 0] * tang[:, 1]
    f = fem.DiscreteField(box, coeff)
    curls = fem.curl_field(f)
    assert np.allclose(curls, [0.0, 0.0, c], rtol=0, atol=1e-12 * c)
    v = fem.curl_at(f, np.array([0.3, 0.4, 0.6]))
    assert np.allclose(v, [0.0, 0.0, c], rtol=0, atol=1e-12 * c)


def test_curl_of_gradient_vanishes(box):
    rng = np.random.default_rng(1)
    phi = rng.normal(size=box.n_vertices)
    f = fem.DiscreteField(box, fem.gradient_coefficients(box, phi))
    curls = fem.curl_field(f)
    scale = np.abs(phi).max()
    assert np.max(np.abs(curls)) <= 1e-12 * scale / 0.25  # / h: unit scale


def test_curl_at_outside_raises(box):
    f = fem.DiscreteField(box)
    from curltd.errors import LocationError
    with pytest.raises(LocationError):
        fem.curl_at(f, np.array([5.0, 5.0, 5.0]))


def test_helmholtz_exact_identity(box):
    rng = np.random.default_rng(3)
    w = rng.normal(size=box.n_edges)
    phi, psi = fem.helmholtz_split(box, w)
    gphi = fem.gradient_coefficients(box, phi)
    assert np.all(psi.coefficients == w - gphi)     # bitwise, by construction
    # Galerkin orthogonality in the L2 pairing
    num = fem.edge_mass_inner(box, gphi, psi.coefficients)
    den = fem.edge_mass_inner(box, w, w)
    assert abs(num) <= 1e-10 * den


def test_helmholtz_of_gradient_is_pure_gradient(box):
    rng = np.random.default_rng(4)
    phi0 = rng.normal(size=box.n_vertices)
    fs = fem.space(box)
    # membership in H^1_0 requires zero boundary values
    _, bmask = fem._p1_poisson(box)
    phi0[bmask] = 0.0
    w = fem.gradient_coefficients(box, phi0)
    _, psi = fem.helmholtz_split(box, w)
    norm = math.sqrt(fem.edge_mass_inner(box, w, w))
    assert math.sqrt(fem.edge_mass_inner(
        box, psi.coefficients, psi.coefficients)) <= 1e-10 * norm


def test_helmholtz_idempotent(box):
    rng = np.random.default_rng(5)
    w = rng.normal(size=box.n_edges)
    _, psi = fem.helmholtz_split(box, w)
    phi2, _ = fem.helmholtz_split(box, psi.coefficients)
    g2 = fem.gradient_coefficients(box, phi2)
    norm = math.sqrt(fem.edge_mass_inner(box, w, w))
    assert math.sqrt(fem.edge_mass_inner(box, g2, g2)) <= 1e-10 * norm


def test_friedrichs_constant_stable_under_refinement():
    ratios = []
    for h in (0.5, 0.25):
        m = G.generate(G.GeometrySpec(kind="box", h=h))
        rng = np.random.default_rng(6)
        w = rng.normal(size=m.n_edges)
        _, psi = fem.helmholtz_split(m, w)
        p = psi.coefficients
        l2 = math.sqrt(fem.edge_mass_inner(m, p, p))
        curls = fem.curl_field(psi)
        cl2 = math.sqrt(float(np.sum(fem.space(m).vols
                                     * np.sum(curls**2, axis=1))))
        ratios.append(l2 / cl2)
    assert 0.5 <= ratios[0] / ratios[1] <= 2.0


def test_assembly_deterministic_across_jobs(motor, magnet_rows):
    rng = np.random.default_rng(9)
    u = fem.DiscreteField(motor, rng.normal(size=motor.n_edges))
    r1 = fem.assemble_residual(motor, PAIR, SMAP, u, magnet_rows, SET, jobs=1)
    r4 = fem.assemble_residual(motor, PAIR, SMAP, u, magnet_rows, SET, jobs=4)
    scale = np.abs(r1).max()
    assert np.max(np.abs(r1 - r4)) <= 1e-12 * scale
    J1 = fem.assemble_jacobian(motor, PAIR, SMAP, u, SET, jobs=1).matrix
    J4 = fem.assemble_jacobian(motor, PAIR, SMAP, u, SET, jobs=4).matrix
    assert abs(J1 - J4).max() <= 1e-12 * abs(J1).max()


def test_kernel_lanes_agree(motor):
    try:
        py = kernels.get_backend("python")
        cc = kernels.get_backend("compiled")
    except ImportError:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(12)
    u = rng.normal(size=motor.n_edges)
    vols_p, grads_p = py.tet_geometry(motor.vertices, motor.tets)
    vols_c, grads_c = cc.tet_geometry(motor.vertices, motor.tets)
    assert np.allclose(vols_p, vols_c, rtol=1e-14, atol=0)
    assert np.allclose(grads_p, grads_c, rtol=1e-13, atol=1e-15)
    cm_p, ms_p = py.whitney_blocks(vols_p, grads_p, motor.tet_edge_signs)
    cm_c, ms_c = cc.whitney_blocks(vols_c, grads_c, motor.tet_edge_signs)
    assert np.allclose(cm_p, cm_c, rtol=1e-13, atol=1e-15)
    assert np.allclose(ms_p, ms_c, rtol=1e-13, atol=1e-18)
    g_p = py.gather_curls(cm_p, motor.tet_edges, u)
    g_c = cc.gather_curls(cm_c, motor.tet_edges, u)
    assert np.allclose(g_p, g_c, rtol=1e-12, atol=1e-13)
    dA = np.tile(np.eye(3) * 3.0, (motor.n_tets, 1, 1))
    jv_p = py.jacobian_values(cm_p, ms_p, vols_p, dA, 0.5)
    jv_c = cc.jacobian_values(cm_c, ms_c, vols_c, dA, 0.5)
    assert np.allclose(jv_p, jv_c, rtol=1e-12, atol=1e-14)
    out_p = np.zeros(motor.n_edges)
    out_c = np.zeros(motor.n_edges)
    fv = rng.normal(size=(motor.n_tets, 3))
    py.residual_accumulate(cm_p, ms_p, motor.tet_edges, vols_p, fv, u, 0.5,
                           out_p)
    cc.residual_accumulate(cm_c, ms_c, motor.tet_edges, vols_c, fv, u, 0.5,
                           out_c)
    scale = np.abs(out_p).max()
    assert np.max(np.abs(out_p - out_c)) <= 1e-12 * scale
