"""Structured mesh generators.

Three domain kinds:

* ``box`` — uniform Kuhn (6-tets-per-cube) triangulation of an axis-aligned
  box, mirrored across the x- and z-midplanes so the connectivity is exactly
  symmetric under those reflections.
* ``toy-motor`` — the same box machinery with the y axis partitioned into
  material slabs: design iron, air gap, permanent magnet, and air backing.
  The whole outer boundary carries the essential (DIRICHLET) tag.
* ``graded-ball`` — a ball of radius r_out around the unit inclusion ball,
  meshed as radial shells over a subdivided-octahedron sphere with
  geometrically growing shell spacing outside the inclusion. Built so the
  24 orientation-preserving signed-permutation rotations map the mesh onto
  itself exactly: vertex coordinates are canonicalized per symmetry orbit
  and every prism is split around Steiner points (centroids), never along
  orientation-breaking quad diagonals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ResourceError
from .mesh import AIR, AIRGAP, INCLUSION, IRON, MAGNET, build_edges

_KINDS = ("box", "toy-motor", "graded-ball")

_MAX_SHELLS = 600          # guard against runaway radial refinement
_MAX_TETS = 40_000_000


@dataclass(frozen=True)
class GeometrySpec:
    """Parameters for one generated domain.

    kind       one of 'box', 'toy-motor', 'graded-ball'
    h          target mesh size (on the inclusion ball for 'graded-ball')
    extents    (L, W, H) box dimensions, box and toy-motor kinds
    slab_breaks  (y1, y2, y3) interface heights of the toy-motor slabs:
               iron [0,y1), air gap [y1,y2), magnet [y2,y3), air [y3,W).
               None picks the default fractions of W.
    r_out      outer radius, graded-ball kind (inclusion radius is 1)
    grading    radial growth factor outside the inclusion, > 1
    subdiv, n_inner  optional overrides of the sphere subdivision level and
               the number of radial shells inside the inclusion
    """

    kind: str
    h: float = 0.125
    extents: tuple = (1.0, 1.0, 1.0)
    slab_breaks: tuple | None = None
    r_out: float = 50.0
    grading: float = 1.4
    subdiv: int | None = None
    n_inner: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise GeometryError(
                f"unknown geometry kind {self.kind!r}; expected one of {_KINDS}")
        if not (self.h > 0.0):
            raise GeometryError(f"mesh size h must be positive, got {self.h}")
        if self.kind in ("box", "toy-motor"):
            if len(self.extents) != 3 or min(self.extents) <= 0.0:
                raise GeometryError(
                    f"extents must be three positive lengths, got {self.extents}")
        if self.kind == "toy-motor":
            y1, y2, y3 = self.breaks()
            w = self.extents[1]
            if not (0.0 < y1 < y2 < y3 < w):
                raise GeometryError(
                    f"slab breaks must satisfy 0 < y1 < y2 < y3 < W, "
                    f"got ({y1}, {y2}, {y3}) with W = {w}")
            if y3 - y2 <= 0.0:
                raise GeometryError("magnet slab has zero thickness")
        if self.kind == "graded-ball":
            if not (self.r_out > 1.0):
                raise GeometryError(
                    f"graded-ball outer radius must exceed the unit inclusion, "
                    f"got {self.r_out}")
            if not (self.grading > 1.0):
                raise GeometryError(
                    f"grading factor must exceed 1, got {self.grading}")

    def breaks(self):
        """Toy-motor slab interface heights (y1, y2, y3)."""
        if self.slab_breaks is not None:
            return tuple(float(b) for b in self.slab_breaks)
        w = self.extents[1]
        return (0.45 * w, 0.60 * w, 0.80 * w)


def generate(spec: GeometrySpec):
    """Build the tagged tetrahedral mesh described by ``spec``."""
    if spec.kind == "box":
        return _generate_box(spec)
    if spec.kind == "toy-motor":
        return _generate_toy_motor(spec)
    return _generate_graded_ball(spec)


# ----------------------------------------------------------------------
# Kuhn boxes and the toy motor.

# The six tets of the Kuhn split of the unit cube, as chains of vertex
# offsets 000 -> 111 adding one coordinate at a time (one per axis order).
_KUHN_PATHS = np.array([
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]],
    [[0, 0, 0], [1, 0, 0], [1, 0, 1], [1, 1, 1]],
    [[0, 0, 0], [0, 1, 0], [1, 1, 0], [1, 1, 1]],
    [[0, 0, 0], [0, 1, 0], [0, 1, 1], [1, 1, 1]],
    [[0, 0, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1]],
    [[0, 0, 0], [0, 0, 1], [0, 1, 1], [1, 1, 1]],
], dtype=np.int64)


def _even_count(length, h):
    return 2 * max(1, math.ceil(length / (2.0 * h)))


def _tensor_tets(xs, ys, zs):
    """Kuhn tets on a tensor grid, mirrored across the x and z midplanes.

    Cells in the upper half (per axis) use the reflected offset pattern, so
    the triangulation connectivity is exactly invariant under the two
    midplane reflections; the seams stay conforming because a reflection
    in x or z leaves the (y,z) resp. (x,y) face diagonals unchanged.
    Returns (vertices, tets, cell_index) with cell_index (nt,3) naming the
    grid cell each tet came from.
    """
    nx, ny, nz = len(xs) - 1, len(ys) - 1, len(zs) - 1
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    vertices = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                             indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()

    # Reflected offset per cell half: upper-half cells flip the local
    # 0/1 offsets of the pattern along that axis.
    offs = _KUHN_PATHS[None, :, :, :]                      # (1, 6, 4, 3)
    ox = np.where((ix >= nx // 2)[:, None, None], 1 - offs[..., 0], offs[..., 0])
    oy = np.broadcast_to(offs[..., 1], ox.shape)
    oz = np.where((iz >= nz // 2)[:, None, None], 1 - offs[..., 2], offs[..., 2])

    vx = ix[:, None, None] + ox
    vy = iy[:, None, None] + oy
    vz = iz[:, None, None] + oz
    vid = (vx * (ny + 1) + vy) * (nz + 1) + vz             # (ncell, 6, 4)
    tets = vid.reshape(-1, 4)

    cell_index = np.stack([ix, iy, iz], axis=1)
    cell_index = np.repeat(cell_index, 6, axis=0)
    tets = _fix_orientation(vertices, tets)
    return vertices, tets, cell_index


def _fix_orientation(vertices, tets):
    """Swap the last two vertices of any negatively oriented tet."""
    p = vertices[tets]
    six_v = np.einsum("tc,tc->t",
                      p[:, 1] - p[:, 0],
                      np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]))
    flip = six_v < 0.0
    tets = tets.copy()
    tets[flip, 2], tets[flip, 3] = tets[flip, 3], tets[flip, 2].copy()
    return tets


def _generate_box(spec):
    L, W, H = (float(e) for e in spec.extents)
    xs = np.linspace(0.0, L, _even_count(L, spec.h) + 1)
    ys = np.linspace(0.0, W, max(1, math.ceil(W / spec.h)) + 1)
    zs = np.linspace(0.0, H, _even_count(H, spec.h) + 1)
    vertices, tets, _ = _tensor_tets(xs, ys, zs)
    region = np.full(tets.shape[0], AIR, dtype=np.int64)
    return build_edges(vertices, tets, region, None)


def _slab_points(breaks, w, h):
    """y grid hitting every slab interface, each slab cut into ~h pieces."""
    stops = [0.0, *breaks, w]
    ys = [0.0]
    for a, b in zip(stops[:-1], stops[1:]):
        n = max(1, math.ceil((b - a) / h))
        ys.extend(np.linspace(a, b, n + 1)[1:])
    return np.array(ys)


def _generate_toy_motor(spec):
    L, W, H = (float(e) for e in spec.extents)
    y1, y2, y3 = spec.breaks()
    xs = np.linspace(0.0, L, _even_count(L, spec.h) + 1)
    zs = np.linspace(0.0, H, _even_count(H, spec.h) + 1)
    ys = _slab_points((y1, y2, y3), W, spec.h)
    vertices, tets, cell_index = _tensor_tets(xs, ys, zs)

    # Tag per grid cell from the y midpoint of the owning slab cell.
    ymid = 0.5 * (ys[:-1] + ys[1:])
    slab = np.select([ymid < y1, ymid < y2, ymid < y3],
                     [IRON, AIRGAP, MAGNET], default=AIR)
    region = slab[cell_index[:, 1]].astype(np.int64)
    return build_edges(vertices, tets, region, None)


# ----------------------------------------------------------------------
# Graded ball: octasphere shells with Steiner-split prisms.


def _canonical_unit(p):
    """Project to the unit sphere, bitwise-equivariant under signed
    coordinate permutations: the norm is accumulated over the magnitudes in
    sorted order, so every point of a symmetry orbit divides by the exact
    same float."""
    ap = np.abs(p)
    a, b, c = np.sort(ap)
    n = math.sqrt((c * c + b * b) + a * a)
    return p / n


def _octasphere(level):
    """Subdivided octahedron: unit vertices, outward CCW faces, edges.

    Midpoint subdivision with a shared-edge cache keeps the triangulation
    identical on every face, which makes the connectivity exactly invariant
    under the full signed-permutation symmetry group of the octahedron.
    """
    verts = [np.array(v, dtype=float) for v in
             [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
              (0, 0, 1), (0, 0, -1)]]
    faces = []
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                a = 0 if sx > 0 else 1
                b = 2 if sy > 0 else 3
                c = 4 if sz > 0 else 5
                pa, pb, pc = verts[a], verts[b], verts[c]
                out = np.cross(pb - pa, pc - pa) @ (pa + pb + pc)
                faces.append((a, b, c) if out > 0 else (a, c, b))

    for _ in range(level):
        cache = {}

        def midpoint(u, v):
            key = (u, v) if u < v else (v, u)
            vid = cache.get(key)
            if vid is None:
                vid = len(verts)
                verts.append(_canonical_unit(0.5 * (verts[u] + verts[v])))
                cache[key] = vid
            return vid

        next_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            next_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = next_faces

    unit = np.array(verts)
    faces = np.array(faces, dtype=np.int64)

    pairs = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    pairs.sort(axis=1)
    edges, inv = np.unique(pairs, axis=0, return_inverse=True)
    face_edges = inv.reshape(3, -1).T          # (F, 3): edges ab, bc, ca
    return unit, faces, edges, face_edges


def _shell_radii(spec):
    """Radii of the spherical shells: n_inner uniform steps to the unit
    inclusion boundary, then geometrically growing steps, the last snapped
    to r_out."""
    n_in = spec.n_inner or max(2, math.ceil(1.25 / spec.h))
    radii = list(np.arange(1, n_in + 1) / n_in)
    step = spec.grading / n_in
    r = 1.0
    while r < spec.r_out and len(radii) < _MAX_SHELLS:
        r += step
        step *= spec.grading
        radii.append(min(r, spec.r_out))
    if radii[-1] < spec.r_out:
        raise ResourceError(
            f"graded-ball shell count exceeded {_MAX_SHELLS} before reaching "
            f"r_out={spec.r_out}; increase grading or h",
            largest_feasible=radii[-1])
    # A snapped final step shorter than half its predecessor merges back.
    if len(radii) > n_in + 1 and \
            radii[-1] - radii[-2] < 0.5 * (radii[-2] - radii[-3]):
        del radii[-2]
    return np.array(radii), n_in


def _generate_graded_ball(spec):
    level = spec.subdiv or max(1, math.ceil(math.log2(math.sqrt(2.0) / spec.h)))
    unit, faces, edges, face_edges = _octasphere(level)
    radii, n_in = _shell_radii(spec)

    nv, nf, ne = len(unit), len(faces), len(edges)
    n_shell = len(radii)
    n_layer = n_shell - 1
    n_tets = nf + n_layer * nf * 14
    if n_tets > _MAX_TETS:
        raise ResourceError(
            f"graded-ball mesh would need {n_tets} tets", largest_feasible=None)

    # Vertex ids: 0 = center, then shells, then per-layer prism centroids,
    # then per-layer quad-face centroids.
    shell0 = 1
    prism0 = shell0 + n_shell * nv
    quad0 = prism0 + n_layer * nf
    n_vert = quad0 + n_layer * ne

    vertices = np.empty((n_vert, 3))
    vertices[0] = 0.0
    shell_ids = shell0 + nv * np.arange(n_shell)[:, None] + np.arange(nv)
    vertices[shell0:prism0] = (radii[:, None, None] * unit).reshape(-1, 3)

    mid_r = 0.5 * (radii[:-1] + radii[1:])                 # (n_layer,)
    # Exactly-rounded 3-term sums keep the centroid coordinates bitwise
    # equivariant under the octahedral rotations (plain left-to-right
    # addition would depend on the face's corner ordering).
    face_dir = np.array([[math.fsum(unit[f, c] for f in face) for c in range(3)]
                         for face in faces]) / 3.0
    edge_dir = (unit[edges[:, 0]] + unit[edges[:, 1]]) / 2.0
    vertices[prism0:quad0] = (mid_r[:, None, None] * face_dir).reshape(-1, 3)
    vertices[quad0:] = (mid_r[:, None, None] * edge_dir).reshape(-1, 3)

    tet_blocks = []

    # Core: center joined to the innermost shell's triangles.
    inner = shell_ids[0][faces]                            # (F, 3)
    core = np.concatenate(
        [np.zeros((nf, 1), dtype=np.int64), inner], axis=1)
    tet_blocks.append(core)

    for layer in range(n_layer):
        lo = shell_ids[layer]
        hi = shell_ids[layer + 1]
        p = prism0 + layer * nf + np.arange(nf)            # prism centroids
        q = quad0 + layer * ne + face_edges                # (F, 3) quad pts

        fa, fb, fc = faces[:, 0], faces[:, 1], faces[:, 2]
        caps = np.stack([
            np.stack([lo[fa], lo[fb], lo[fc], p], axis=1),
            np.stack([hi[fa], hi[fb], hi[fc], p], axis=1),
        ])
        tet_blocks.append(caps.reshape(-1, 4))

        # Each quad face (rim edge (u,v) swept between the shells) fans
        # into 4 triangles around its centroid, each joined to the prism
        # centroid.
        for k, (u, v) in enumerate(((fa, fb), (fb, fc), (fc, fa))):
            qk = q[:, k]
            quad_tets = np.stack([
                np.stack([lo[u], lo[v], qk, p], axis=1),
                np.stack([lo[v], hi[v], qk, p], axis=1),
                np.stack([hi[v], hi[u], qk, p], axis=1),
                np.stack([hi[u], lo[u], qk, p], axis=1),
            ])
            tet_blocks.append(quad_tets.reshape(-1, 4))

    tets = np.concatenate(tet_blocks)
    tets = _fix_orientation(vertices, tets)

    region = np.full(tets.shape[0], AIR, dtype=np.int64)
    n_inside = nf + (n_in - 1) * nf * 14       # core + layers within radius 1
    inside = np.zeros(tets.shape[0], dtype=bool)
    inside[:nf] = True
    per_layer = nf * 14
    for layer in range(n_in - 1):
        s = nf + layer * per_layer
        inside[s:s + per_layer] = True
    region[inside] = INCLUSION
    assert int(inside.sum()) == n_inside

    return build_edges(vertices, tets, region, None)


def graded_interval(a, b, h_fine, grading, fine_end="left"):
    """1D points on [a, b], spacing h_fine at one end growing geometrically.

    Used for locally refined tensor meshes in convergence studies.
    """
    if not (b > a and h_fine > 0.0 and grading > 1.0):
        raise GeometryError("graded_interval needs b > a, h_fine > 0, grading > 1")
    steps = []
    total, step = 0.0, h_fine
    while total < (b - a) - 1e-12 * (b - a):
        step = min(step, (b - a) - total)
        steps.append(step)
        total += step
        step *= grading
    pts = a + np.concatenate([[0.0], np.cumsum(steps)])
    pts[-1] = b
    if fine_end == "right":
        pts = (a + b) - pts[::-1]
    return pts
