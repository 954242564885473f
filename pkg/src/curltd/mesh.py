"""Tetrahedral meshes with oriented global edges and region/boundary tags.

A mesh is immutable after construction: all index and coordinate arrays are
marked read-only, so concurrent readers never need locks. Edge orientation
is global: every edge is stored as (v0, v1) with v0 < v1, and each tet
records, for its six local edges, the global edge index together with the
sign relating local to global direction.
"""

from __future__ import annotations

import hashlib
import threading

import numpy as np

from .errors import LocationError, MeshFormatError, OrientationError, TagError

# Region tags.
AIR = 0
IRON = 1
MAGNET = 2
AIRGAP = 3
INCLUSION = 4
REGION_NAMES = {AIR: "air", IRON: "iron", MAGNET: "magnet",
                AIRGAP: "airgap", INCLUSION: "inclusion"}

# Boundary facet tags.
DIRICHLET = 1
NATURAL = 2

# Local edge (i, j) -> vertices (tet[i], tet[j]); fixed enumeration order.
LOCAL_EDGES = np.array(
    [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], dtype=np.int64
)

# Local face k is the face opposite local vertex k.
LOCAL_FACES = np.array(
    [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)], dtype=np.int64
)


def tet_volumes(vertices, tets):
    """Signed volumes of all tets, vectorized."""
    p = vertices[tets]
    d = p[:, 1:] - p[:, :1]
    return np.einsum("ti,ti->t", d[:, 0], np.cross(d[:, 1], d[:, 2])) / 6.0


class Mesh:
    """Tet mesh with vertices, tets, oriented edges, and tags.

    Fields
    ------
    vertices : (nv, 3) float64, coordinates in meters
    tets : (nt, 4) int64 vertex indices, positively oriented
    region_tag : (nt,) int64, one of AIR/IRON/MAGNET/AIRGAP/INCLUSION
    edges : (ne, 2) int64 with edges[:,0] < edges[:,1], lexicographically sorted
    tet_edges : (nt, 6) int64 global edge index per local edge
    tet_edge_signs : (nt, 6) int8, +1 iff local direction matches global
    boundary_facets : (nb, 3) int64 rows (tet, local face, tag)
    """

    def __init__(self, vertices, tets, region_tag, boundary_facets,
                 edges, tet_edges, tet_edge_signs):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.tets = np.ascontiguousarray(tets, dtype=np.int64)
        self.region_tag = np.ascontiguousarray(region_tag, dtype=np.int64)
        self.boundary_facets = np.ascontiguousarray(boundary_facets, dtype=np.int64)
        self.edges = np.ascontiguousarray(edges, dtype=np.int64)
        self.tet_edges = np.ascontiguousarray(tet_edges, dtype=np.int64)
        self.tet_edge_signs = np.ascontiguousarray(tet_edge_signs, dtype=np.int8)
        for a in (self.vertices, self.tets, self.region_tag, self.boundary_facets,
                  self.edges, self.tet_edges, self.tet_edge_signs):
            a.flags.writeable = False
        self._lock = threading.Lock()
        self._adjacency = None
        self._kdtree = None
        self._grads = None
        self._vols = None

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_tets(self):
        return self.tets.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    # ------------------------------------------------------------------
    # Derived geometry (cached; meshes are immutable so this is safe).

    def volumes(self):
        """Per-tet volumes (all positive by the orientation invariant)."""
        if self._vols is None:
            with self._lock:
                if self._vols is None:
                    v = tet_volumes(self.vertices, self.tets)
                    v.flags.writeable = False
                    self._vols = v
        return self._vols

    def barycentric_gradients(self):
        """Per-tet gradients of the four barycentric coordinates, (nt,4,3)."""
        if self._grads is None:
            with self._lock:
                if self._grads is None:
                    from . import kernels
                    _, grads = kernels.tet_geometry(self.vertices, self.tets)
                    grads.flags.writeable = False
                    self._grads = grads
        return self._grads

    def centroids(self):
        return self.vertices[self.tets].mean(axis=1)

    def fingerprint(self):
        """Content hash used in table provenance."""
        h = hashlib.sha256()
        for a in (self.vertices, self.tets, self.region_tag, self.boundary_facets):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    # ------------------------------------------------------------------
    # Point location.

    def _face_adjacency(self):
        """neighbors[t, k] = tet across local face k of tet t, or -1."""
        if self._adjacency is None:
            with self._lock:
                if self._adjacency is None:
                    nt = self.n_tets
                    faces = np.sort(self.tets[:, LOCAL_FACES], axis=2)
                    flat = faces.reshape(-1, 3)
                    order = np.lexsort((flat[:, 2], flat[:, 1], flat[:, 0]))
                    srt = flat[order]
                    same = np.all(srt[1:] == srt[:-1], axis=1)
                    nb = np.full(4 * nt, -1, dtype=np.int64)
                    left = order[:-1][same]
                    right = order[1:][same]
                    nb[left] = right // 4
                    nb[right] = left // 4
                    adj = nb.reshape(nt, 4)
                    adj.flags.writeable = False
                    self._adjacency = adj
        return self._adjacency

    def _centroid_tree(self):
        if self._kdtree is None:
            with self._lock:
                if self._kdtree is None:
                    from scipy.spatial import cKDTree
                    self._kdtree = cKDTree(self.centroids())
        return self._kdtree

    def barycentric(self, tet, point):
        """Barycentric coordinates of a point w.r.t. one tet."""
        g = self.barycentric_gradients()[tet]
        c = self.vertices[self.tets[tet]].mean(axis=0)
        return 0.25 + g @ (np.asarray(point, dtype=float) - c)

    def locate(self, point, start=None, tol=1e-10):
        """Find the tet containing a point.

        Walks across faces toward the point from a KD-tree seed; falls back
        to a full scan if the walk escapes (non-convex domains). Raises
        LocationError when the point lies outside the mesh.
        """
        point = np.asarray(point, dtype=float)
        adj = self._face_adjacency()
        if start is None:
            start = int(self._centroid_tree().query(point)[1])
        t = start
        visited = 0
        limit = max(64, self.n_tets)
        while visited < limit:
            lam = self.barycentric(t, point)
            k = int(np.argmin(lam))
            if lam[k] >= -tol:
                return t
            nxt = adj[t, k]
            if nxt < 0:
                break
            t = int(nxt)
            visited += 1
        # Fallback: vectorized scan over all tets.
        g = self.barycentric_gradients()
        c = self.centroids()
        lam = 0.25 + np.einsum("tkc,tc->tk", g, point[None, :] - c)
        inside = np.min(lam, axis=1)
        best = int(np.argmax(inside))
        if inside[best] >= -tol:
            return best
        raise LocationError(f"point {point.tolist()} lies outside the mesh")


def build_edges(vertices, tets, region_tag, boundary_facets):
    """Construct a Mesh, deriving the global edge structure.

    Edges are the distinct vertex pairs appearing as local edges of the
    tets, stored (min, max) and sorted lexicographically — deterministic
    for identical input. A tet with non-positive volume raises
    OrientationError naming it.
    """
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    tets = np.ascontiguousarray(tets, dtype=np.int64)
    vols = tet_volumes(vertices, tets)
    bad = np.flatnonzero(vols <= 0.0)
    if bad.size:
        raise OrientationError(bad[0], vols[bad[0]])

    pairs = tets[:, LOCAL_EDGES]                     # (nt, 6, 2)
    lo = pairs.min(axis=2)
    hi = pairs.max(axis=2)
    keys = np.stack([lo.ravel(), hi.ravel()], axis=1)
    edges, inverse = np.unique(keys, axis=0, return_inverse=True)
    tet_edges = inverse.reshape(-1, 6)
    signs = np.where(pairs[:, :, 0] < pairs[:, :, 1], 1, -1).astype(np.int8)
    if boundary_facets is None:
        boundary_facets = detect_boundary_facets(tets)
    return Mesh(vertices, tets, region_tag, boundary_facets,
                edges, tet_edges, signs)


def detect_boundary_facets(tets, tag=DIRICHLET):
    """All faces owned by exactly one tet, tagged uniformly."""
    nt = tets.shape[0]
    faces = np.sort(tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    order = np.lexsort((faces[:, 2], faces[:, 1], faces[:, 0]))
    srt = faces[order]
    dup = np.zeros(len(srt), dtype=bool)
    same = np.all(srt[1:] == srt[:-1], axis=1)
    dup[:-1] |= same
    dup[1:] |= same
    solo = order[~dup]
    out = np.empty((solo.size, 3), dtype=np.int64)
    out[:, 0] = solo // 4
    out[:, 1] = solo % 4
    out[:, 2] = tag
    return out


def check_conformity(mesh):
    """Assert the facet-sharing invariant: interior faces belong to exactly
    two tets and boundary faces to exactly one. Raises MeshFormatError."""
    faces = np.sort(mesh.tets[:, LOCAL_FACES], axis=2).reshape(-1, 3)
    _, counts = np.unique(faces, axis=0, return_counts=True)
    if counts.max(initial=0) > 2:
        raise MeshFormatError("a facet is shared by more than two tets")
    n_boundary = int((counts == 1).sum())
    if n_boundary != mesh.boundary_facets.shape[0]:
        raise MeshFormatError(
            f"boundary facet count mismatch: {n_boundary} detected, "
            f"{mesh.boundary_facets.shape[0]} recorded"
        )


def volume(mesh, tag):
    """Total volume of all tets carrying a region tag.

    The tag must be one of the known region labels; a tag outside the
    enumeration raises TagError. A known tag carried by no tet gives 0.
    """
    if tag not in REGION_NAMES:
        raise TagError(f"unknown region tag {tag!r}")
    mask = mesh.region_tag == tag
    if not mask.any():
        return 0.0
    return float(mesh.volumes()[mask].sum())


# ----------------------------------------------------------------------
# ASCII mesh format:
#   tetmesh 1
#   vertices N          followed by N lines "x y z"
#   tets M              followed by M lines "v0 v1 v2 v3 region_tag"
#   bfacets K           followed by K lines "v0 v1 v2 tag"

def write_mesh(mesh, path):
    with open(path, "w") as fh:
        fh.write("tetmesh 1\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        fh.write(f"tets {mesh.n_tets}\n")
        for (a, b, c, d), r in zip(mesh.tets, mesh.region_tag):
            fh.write(f"{a} {b} {c} {d} {r}\n")
        fh.write(f"bfacets {mesh.boundary_facets.shape[0]}\n")
        tv = mesh.tets[mesh.boundary_facets[:, 0]]
        for (t, lf, tag), verts in zip(mesh.boundary_facets, tv):
            a, b, c = verts[LOCAL_FACES[lf]]
            fh.write(f"{a} {b} {c} {tag}\n")


def read_mesh(path):
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise MeshFormatError("unexpected end of mesh file")
        out = tokens[pos:pos + n]
        pos += n
        return out

    magic = take(2)
    if magic != ["tetmesh", "1"]:
        raise MeshFormatError(f"bad header {' '.join(magic)!r}")
    kw, n = take(2)
    if kw != "vertices":
        raise MeshFormatError(f"expected 'vertices', got {kw!r}")
    nv = int(n)
    vertices = np.array(take(3 * nv), dtype=float).reshape(nv, 3)
    kw, n = take(2)
    if kw != "tets":
        raise MeshFormatError(f"expected 'tets', got {kw!r}")
    nt = int(n)
    trows = np.array(take(5 * nt), dtype=np.int64).reshape(nt, 5)
    kw, n = take(2)
    if kw != "bfacets":
        raise MeshFormatError(f"expected 'bfacets', got {kw!r}")
    nb = int(n)
    brows = np.array(take(4 * nb), dtype=np.int64).reshape(nb, 4) if nb else \
        np.empty((0, 4), dtype=np.int64)
    if pos != len(tokens):
        raise MeshFormatError("trailing data after bfacets block")

    tets = trows[:, :4]
    region = trows[:, 4]
    # Map facet vertex triples back onto (tet, local face).
    lookup = {}
    for t in range(nt):
        for lf in range(4):
            key = tuple(sorted(tets[t, LOCAL_FACES[lf]]))
            lookup[key] = (t, lf)
    bfacets = np.empty((nb, 3), dtype=np.int64)
    for i, (a, b, c, tag) in enumerate(brows):
        key = tuple(sorted((int(a), int(b), int(c))))
        if key not in lookup:
            raise MeshFormatError(f"bfacet {key} is not a face of any tet")
        t, lf = lookup[key]
        bfacets[i] = (t, lf, tag)
    return build_edges(vertices, tets, region, bfacets)
