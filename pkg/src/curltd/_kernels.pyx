# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly kernels.

Mirrors the pure-NumPy module `_kernels_py` function for function; the two
lanes must agree to floating-point noise and are cross-checked in the test
suite. Loop bodies are written out explicitly so the compiler sees fixed
trip counts (4 vertices, 6 edges, 3 components).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef int[6] _EI = [0, 0, 0, 1, 1, 2]
cdef int[6] _EJ = [1, 2, 3, 2, 3, 3]


cdef inline void _cross(const double* a, const double* b, double* out) nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


def tet_geometry(const double[:, ::1] vertices, const cnp.int64_t[:, ::1] tets):
    """Per-tet signed volumes and barycentric-coordinate gradients."""
    cdef Py_ssize_t nt = tets.shape[0]
    vols_arr = np.empty(nt, dtype=np.float64)
    grads_arr = np.empty((nt, 4, 3), dtype=np.float64)
    cdef double[::1] vols = vols_arr
    cdef double[:, :, ::1] grads = grads_arr
    cdef Py_ssize_t t, c
    cdef double d1[3]
    cdef double d2[3]
    cdef double d3[3]
    cdef double cx[3]
    cdef double six_v, inv
    cdef const double* p0
    cdef const double* p1
    cdef const double* p2
    cdef const double* p3
    with nogil:
        for t in range(nt):
            p0 = &vertices[tets[t, 0], 0]
            p1 = &vertices[tets[t, 1], 0]
            p2 = &vertices[tets[t, 2], 0]
            p3 = &vertices[tets[t, 3], 0]
            for c in range(3):
                d1[c] = p1[c] - p0[c]
                d2[c] = p2[c] - p0[c]
                d3[c] = p3[c] - p0[c]
            _cross(d2, d3, cx)
            six_v = d1[0] * cx[0] + d1[1] * cx[1] + d1[2] * cx[2]
            vols[t] = six_v / 6.0
            inv = 1.0 / six_v
            for c in range(3):
                grads[t, 1, c] = cx[c] * inv
            _cross(d3, d1, cx)
            for c in range(3):
                grads[t, 2, c] = cx[c] * inv
            _cross(d1, d2, cx)
            for c in range(3):
                grads[t, 3, c] = cx[c] * inv
            for c in range(3):
                grads[t, 0, c] = -(grads[t, 1, c] + grads[t, 2, c]
                                   + grads[t, 3, c])
    return vols_arr, grads_arr


def whitney_blocks(const double[::1] vols, const double[:, :, ::1] grads,
                   const signed char[:, ::1] signs):
    """Signed per-tet curl vectors and edge mass blocks."""
    cdef Py_ssize_t nt = vols.shape[0]
    curl_arr = np.empty((nt, 6, 3), dtype=np.float64)
    mass_arr = np.empty((nt, 6, 6), dtype=np.float64)
    cdef double[:, :, ::1] curlmat = curl_arr
    cdef double[:, :, ::1] mass = mass_arr
    cdef Py_ssize_t t, e, f, c, a, b
    cdef int i, j, k, l
    cdef double gg[4][4]
    cdef double cx[3]
    cdef double se, scale, mef
    with nogil:
        for t in range(nt):
            for a in range(4):
                for b in range(4):
                    gg[a][b] = (grads[t, a, 0] * grads[t, b, 0]
                                + grads[t, a, 1] * grads[t, b, 1]
                                + grads[t, a, 2] * grads[t, b, 2])
            for e in range(6):
                i = _EI[e]
                j = _EJ[e]
                se = 2.0 * signs[t, e]
                _cross(&grads[t, i, 0], &grads[t, j, 0], cx)
                for c in range(3):
                    curlmat[t, e, c] = se * cx[c]
            scale = vols[t] / 20.0
            for e in range(6):
                i = _EI[e]
                j = _EJ[e]
                for f in range(6):
                    k = _EI[f]
                    l = _EJ[f]
                    mef = (gg[j][l] * (1.0 + (i == k))
                           - gg[j][k] * (1.0 + (i == l))
                           - gg[i][l] * (1.0 + (j == k))
                           + gg[i][k] * (1.0 + (j == l)))
                    mass[t, e, f] = scale * signs[t, e] * signs[t, f] * mef
    return curl_arr, mass_arr


def gather_curls(const double[:, :, ::1] curlmat, const cnp.int64_t[:, ::1] tet_edges,
                 const double[::1] u):
    """Per-tet constant curl of the edge-coefficient field u, (nt,3)."""
    cdef Py_ssize_t nt = curlmat.shape[0]
    out_arr = np.zeros((nt, 3), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, e
    cdef double ue
    with nogil:
        for t in range(nt):
            for e in range(6):
                ue = u[tet_edges[t, e]]
                out[t, 0] += ue * curlmat[t, e, 0]
                out[t, 1] += ue * curlmat[t, e, 1]
                out[t, 2] += ue * curlmat[t, e, 2]
    return out_arr


def residual_accumulate(const double[:, :, ::1] curlmat, const double[:, :, ::1] mass,
                        const cnp.int64_t[:, ::1] tet_edges, const double[::1] vols,
                        const double[:, ::1] fvec, const double[::1] u, double kappa,
                        double[::1] out):
    """out[e] += sum over tets of vol * fvec . curl(w_e) + kappa (M u)_e."""
    cdef Py_ssize_t nt = curlmat.shape[0]
    cdef Py_ssize_t t, e, f
    cdef double contrib
    with nogil:
        for t in range(nt):
            for e in range(6):
                contrib = vols[t] * (curlmat[t, e, 0] * fvec[t, 0]
                                     + curlmat[t, e, 1] * fvec[t, 1]
                                     + curlmat[t, e, 2] * fvec[t, 2])
                if kappa != 0.0:
                    for f in range(6):
                        contrib += kappa * mass[t, e, f] * u[tet_edges[t, f]]
                out[tet_edges[t, e]] += contrib


def jacobian_values(const double[:, :, ::1] curlmat, const double[:, :, ::1] mass,
                    const double[::1] vols, const double[:, :, ::1] dA, double kappa):
    """Per-tet 6x6 blocks vol * curl(w_e) . dA . curl(w_f) + kappa M_ef."""
    cdef Py_ssize_t nt = curlmat.shape[0]
    vals_arr = np.empty((nt, 6, 6), dtype=np.float64)
    cdef double[:, :, ::1] vals = vals_arr
    cdef Py_ssize_t t, e, f, c
    cdef double ae[6][3]
    cdef double v
    with nogil:
        for t in range(nt):
            for e in range(6):
                for c in range(3):
                    ae[e][c] = (dA[t, c, 0] * curlmat[t, e, 0]
                                + dA[t, c, 1] * curlmat[t, e, 1]
                                + dA[t, c, 2] * curlmat[t, e, 2])
            for e in range(6):
                for f in range(6):
                    v = vols[t] * (curlmat[t, e, 0] * ae[f][0]
                                   + curlmat[t, e, 1] * ae[f][1]
                                   + curlmat[t, e, 2] * ae[f][2])
                    if kappa != 0.0:
                        v += kappa * mass[t, e, f]
                    vals[t, e, f] = v
    return vals_arr
