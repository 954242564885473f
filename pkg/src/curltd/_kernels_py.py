"""Pure-NumPy assembly kernels (fallback lane).

Same contract as the compiled `_kernels` extension: per-tet geometry,
signed Whitney curl/mass blocks, curl gathers, residual scatter and
Jacobian block fill. Everything is vectorized; the compiled lane exists
because these per-element small-matrix operations dominate assembly time.

Basis bookkeeping: local edge e = (i, j) from the fixed enumeration
[(0,1),(0,2),(0,3),(1,2),(1,3),(2,3)] carries the Whitney function
w_e = lam_i grad(lam_j) - lam_j grad(lam_i), whose curl is the per-tet
constant 2 grad(lam_i) x grad(lam_j). Mass entries use the exact formula
integral(lam_a lam_b) = |T| (1 + delta_ab) / 20.
"""

from __future__ import annotations

import numpy as np

_EI = np.array([0, 0, 0, 1, 1, 2])   # local edge start vertices
_EJ = np.array([1, 2, 3, 2, 3, 3])   # local edge end vertices

# (1 + delta) coupling tables for the mass closed form, indexed [e, f].
_D_II = 1.0 + (_EI[:, None] == _EI[None, :])
_D_IJ = 1.0 + (_EI[:, None] == _EJ[None, :])
_D_JI = 1.0 + (_EJ[:, None] == _EI[None, :])
_D_JJ = 1.0 + (_EJ[:, None] == _EJ[None, :])


def tet_geometry(vertices, tets):
    """Per-tet signed volumes and barycentric-coordinate gradients.

    Returns (vols (nt,), grads (nt,4,3)). grads[t,a] is the constant
    gradient of the a-th barycentric coordinate on tet t.
    """
    p = vertices[tets]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    d3 = p[:, 3] - p[:, 0]
    c23 = np.cross(d2, d3)
    six_v = np.einsum("tc,tc->t", d1, c23)
    vols = six_v / 6.0
    grads = np.empty((tets.shape[0], 4, 3))
    inv = 1.0 / six_v
    grads[:, 1] = c23 * inv[:, None]
    grads[:, 2] = np.cross(d3, d1) * inv[:, None]
    grads[:, 3] = np.cross(d1, d2) * inv[:, None]
    grads[:, 0] = -(grads[:, 1] + grads[:, 2] + grads[:, 3])
    return vols, grads


def whitney_blocks(vols, grads, signs):
    """Signed per-tet curl vectors and edge mass blocks.

    curlmat[t,e] = sign * 2 grad(lam_i) x grad(lam_j) (a constant vector),
    mass[t,e,f] = sign_e sign_f * integral(w_e . w_f) over the tet.
    """
    gi = grads[:, _EI]                      # (nt, 6, 3)
    gj = grads[:, _EJ]
    curlmat = 2.0 * np.cross(gi, gj) * signs[:, :, None]

    gg = np.einsum("tac,tbc->tab", grads, grads)   # (nt, 4, 4)
    m = (gg[:, _EJ[:, None], _EJ[None, :]] * _D_II
         - gg[:, _EJ[:, None], _EI[None, :]] * _D_IJ
         - gg[:, _EI[:, None], _EJ[None, :]] * _D_JI
         + gg[:, _EI[:, None], _EI[None, :]] * _D_JJ)
    m *= (vols / 20.0)[:, None, None]
    ss = signs.astype(float)
    mass = m * ss[:, :, None] * ss[:, None, :]
    return curlmat, mass


def gather_curls(curlmat, tet_edges, u):
    """Per-tet constant curl of the edge-coefficient field u, (nt,3)."""
    uloc = u[tet_edges]
    return np.einsum("te,tec->tc", uloc, curlmat)


def residual_accumulate(curlmat, mass, tet_edges, vols, fvec, u, kappa, out):
    """out[e] += sum over tets of vol * fvec . curl(w_e) + kappa (M u)_e."""
    contrib = vols[:, None] * np.einsum("tec,tc->te", curlmat, fvec)
    if kappa != 0.0:
        uloc = u[tet_edges]
        contrib += kappa * np.einsum("tef,tf->te", mass, uloc)
    np.add.at(out, tet_edges.ravel(), contrib.ravel())


def jacobian_values(curlmat, mass, vols, dA, kappa):
    """Per-tet 6x6 blocks vol * curl(w_e) . dA . curl(w_f) + kappa M_ef."""
    vals = np.einsum("tec,tcd,tfd->tef", curlmat, dA, curlmat)
    vals *= vols[:, None, None]
    if kappa != 0.0:
        vals += kappa * mass
    return vals
