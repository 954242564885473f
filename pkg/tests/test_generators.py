"""Generated domains: tagging, symmetry, grading, validation errors."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from curltd import generators as G
from curltd import mesh as M
from curltd.errors import GeometryError, ResourceError


def octahedral_rotations():
    """The 24 signed permutation matrices with determinant +1."""
    rots = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            R = np.zeros((3, 3))
            for i, (p, s) in enumerate(zip(perm, signs)):
                R[i, p] = s
            if np.linalg.det(R) > 0:
                rots.append(R)
    assert len(rots) == 24
    return rots


def connectivity_invariant_under(mesh, point_map):
    """True if point_map permutes the vertex set bitwise and maps the tet
    sets onto themselves."""
    V = mesh.vertices
    index = {V[i].tobytes(): i for i in range(len(V))}
    W = point_map(V)
    perm = np.empty(len(V), dtype=np.int64)
    for i in range(len(V)):
        j = index.get(W[i].tobytes())
        if j is None:
            return False
        perm[i] = j
    tsets = {frozenset(t) for t in mesh.tets.tolist()}
    mapped = {frozenset(perm[list(t)]) for t in tsets}
    return mapped == tsets


# ----------------------------------------------------------------------
# Spec validation


@pytest.mark.parametrize("kwargs", [
    dict(kind="cylinder", h=0.1),
    dict(kind="box", h=0.0),
    dict(kind="box", h=-0.5),
    dict(kind="box", h=0.1, extents=(1.0, 0.0, 1.0)),
    dict(kind="toy-motor", h=0.1, slab_breaks=(0.6, 0.5, 0.8)),
    dict(kind="toy-motor", h=0.1, slab_breaks=(0.4, 0.6, 0.6)),   # empty magnet
    dict(kind="toy-motor", h=0.1, slab_breaks=(0.4, 0.6, 1.2)),
    dict(kind="graded-ball", h=0.1, r_out=0.9),
    dict(kind="graded-ball", h=0.1, r_out=50.0, grading=1.0),
])
def test_spec_rejects(kwargs):
    with pytest.raises(GeometryError):
        G.GeometrySpec(**kwargs)


def test_runaway_refinement_rejected():
    spec = G.GeometrySpec(kind="graded-ball", h=0.4, r_out=50.0,
                          grading=1.0000001, n_inner=500)
    with pytest.raises(ResourceError):
        G.generate(spec)


# ----------------------------------------------------------------------
# Box and toy motor


def test_box_counts_and_volume():
    m = G.generate(G.GeometrySpec(kind="box", h=0.5, extents=(2.0, 1.0, 1.0)))
    assert m.volumes().sum() == pytest.approx(2.0, rel=1e-13)
    assert np.all(m.region_tag == M.AIR)
    assert np.all(m.boundary_facets[:, 2] == M.DIRICHLET)


@pytest.fixture(scope="module")
def motor():
    return G.generate(G.GeometrySpec(kind="toy-motor", h=0.25))


def test_motor_slab_volumes(motor):
    spec = G.GeometrySpec(kind="toy-motor", h=0.25)
    L, W, H = spec.extents
    y1, y2, y3 = spec.breaks()
    expect = {M.IRON: L * H * y1, M.AIRGAP: L * H * (y2 - y1),
              M.MAGNET: L * H * (y3 - y2), M.AIR: L * H * (W - y3)}
    for tag, vol in expect.items():
        assert M.volume(motor, tag) == pytest.approx(vol, rel=1e-12)


def test_motor_fully_clamped(motor):
    # every outer face carries the essential tag, and their total area
    # closes the box
    assert np.all(motor.boundary_facets[:, 2] == M.DIRICHLET)
    M.check_conformity(motor)


def test_motor_mirror_connectivity(motor):
    L, _, H = G.GeometrySpec(kind="toy-motor", h=0.25).extents

    def mirror_x(V):
        W = V.copy()
        W[:, 0] = L - W[:, 0]
        return W

    def mirror_z(V):
        W = V.copy()
        W[:, 2] = H - W[:, 2]
        return W

    assert connectivity_invariant_under(motor, mirror_x)
    assert connectivity_invariant_under(motor, mirror_z)


# ----------------------------------------------------------------------
# Graded ball


@pytest.fixture(scope="module")
def ball():
    return G.generate(G.GeometrySpec(kind="graded-ball", h=0.4, r_out=50.0))


def test_ball_conforms(ball):
    M.check_conformity(ball)
    assert np.all(ball.volumes() > 0)


def test_ball_outer_radius_exact(ball):
    r = np.linalg.norm(ball.vertices, axis=1)
    assert r.max() == 50.0
    # boundary facets lie on the outer sphere
    tets = ball.tets[ball.boundary_facets[:, 0]]
    faces = tets[np.arange(len(tets))[:, None],
                 M.LOCAL_FACES[ball.boundary_facets[:, 1]]]
    assert np.all(np.abs(np.linalg.norm(
        ball.vertices[faces], axis=2) - 50.0) < 1e-9)


def test_ball_rotation_equivariance(ball):
    for R in octahedral_rotations():
        assert connectivity_invariant_under(ball, lambda V, R=R: V @ R.T)


def test_ball_cli_radius_mapping():
    # truncation parameter 0.02 means outer radius 1/0.02
    spec = G.GeometrySpec(kind="graded-ball", h=0.4, r_out=1.0 / 0.02)
    assert spec.r_out == 50.0


@pytest.mark.slow
def test_ball_fine_resolution_contract():
    m = G.generate(G.GeometrySpec(kind="graded-ball", h=0.2, r_out=50.0,
                                  grading=1.4))
    r = np.linalg.norm(m.vertices, axis=1)
    inside = np.all(r[m.tets] <= 1.0 + 1e-9, axis=1)

    # tets inside the unit ball are exactly the INCLUSION-tagged ones ...
    assert np.array_equal(inside, m.region_tag == M.INCLUSION)

    # ... their diameters stay below ~1.5 h ...
    p = m.vertices[m.tets[inside]]
    dia = np.zeros(len(p))
    for i, j in itertools.combinations(range(4), 2):
        dia = np.maximum(dia, np.linalg.norm(p[:, i] - p[:, j], axis=1))
    assert dia.max() <= 0.31

    # ... and the polyhedral inclusion volume approximates the unit ball
    vol = M.volume(m, M.INCLUSION)
    exact = 4.0 / 3.0 * np.pi
    assert abs(vol - exact) / exact <= 0.05


def test_graded_interval():
    pts = G.graded_interval(0.0, 2.0, 0.05, 1.3)
    assert pts[0] == 0.0 and pts[-1] == 2.0
    d = np.diff(pts)
    assert np.all(d > 0)
    assert d[0] == pytest.approx(0.05, rel=1e-12)
    assert np.all(d[1:] / d[:-1] <= 1.3 + 1e-12)
    rev = G.graded_interval(0.0, 2.0, 0.05, 1.3, fine_end="right")
    assert np.diff(rev)[-1] == pytest.approx(0.05, rel=1e-9)
