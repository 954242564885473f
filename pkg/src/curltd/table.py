"""Offline tabulation of T(t e1) per insertion direction, quadratic
spline interpolation, and online evaluation of dJ(U0, P0).

The point value for arbitrary U0 reduces to the tabulated axis via a
rotation R with R e1 = U0/|U0|:

    dJ(U0, P0) = sum_i c_i * spline_i(|U0|),   c = R^T P0.

c1 = (U0/|U0|) . P0 does not depend on which R is chosen; the c2, c3
terms do, but they multiply the table's off-axis components, which
vanish (to solver precision on the rotation-equivariant ball), so the
evaluation is rotation-invariant regardless of the convention.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline, make_interp_spline

from . import cell, fem
from .errors import ConfigError, CurlTDError, PartialTableError, TDRangeError

DEFAULT_DT = 0.05
DEFAULT_T_MAX = 2.0
# coarse ball: the offline sweep runs 40+ Newton solves, and the
# derivative value it feeds is accurate to ~4% there (measured against
# the closed form); use h= cell.DEFAULT_H for single-point studies
DEFAULT_TABLE_H = 0.4

_E1 = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class RotationFrame:
    """Proper rotation R with R e1 equal to a prescribed unit vector."""

    R: np.ndarray


def rotation_to(w):
    """Rodrigues rotation mapping e1 onto the unit vector w.

    Conventions: w = e1 gives the identity; w = -e1 gives the rotation
    by pi about e2, diag(-1, 1, -1).  Any choice would do for the dJ
    evaluation; this one is deterministic.
    """
    w = np.asarray(w, dtype=float).reshape(3)
    if abs(np.linalg.norm(w) - 1.0) > 1e-9:
        raise ValueError(f"rotation target must be a unit vector, "
                         f"|w| = {np.linalg.norm(w):.12g}")
    c = w[0]
    axis = np.array([0.0, -w[2], w[1]])      # e1 x w
    s = np.linalg.norm(axis)
    if s < 1e-12:
        if c > 0.0:
            return RotationFrame(np.eye(3))
        return RotationFrame(np.diag([-1.0, 1.0, -1.0]))
    k = axis / s
    K = np.array([[0.0, -k[2], k[1]],
                  [k[2], 0.0, -k[0]],
                  [-k[1], k[0], 0.0]])
    R = np.eye(3) + s * K + (1.0 - c) * (K @ K)
    return RotationFrame(R)


@dataclass(frozen=True)
class TDTable:
    """T(t e1) on a uniform t grid with per-component quadratic splines."""

    direction: str
    t_grid: np.ndarray          # (N+1,), 0, dt, ..., t_max
    values: np.ndarray          # (N+1, 3)
    spline: BSpline             # vector-valued, shape (3,) per evaluation
    provenance: dict = field(default_factory=dict)

    @property
    def t_max(self):
        return float(self.t_grid[-1])

    @property
    def delta_t(self):
        return float(self.t_grid[1] - self.t_grid[0])


def _validate_grid(t_grid, values):
    t_grid = np.asarray(t_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 3:
        raise ConfigError("table grid needs at least three points")
    if t_grid[0] != 0.0:
        raise ConfigError("table grid must start at t = 0")
    if not (np.diff(t_grid) > 0).all():
        raise ConfigError("table grid must be strictly increasing")
    if values.shape != (len(t_grid), 3):
        raise ConfigError("table values must be one 3-vector per grid point")
    if values[0].any():
        raise ConfigError("the t = 0 row must be exactly zero")
    return t_grid, values


def fit_table(direction, t_grid, values, provenance=None):
    """Build a TDTable from grid data; fits the quadratic spline and
    checks that it reproduces the knots."""
    t_grid, values = _validate_grid(t_grid, values)
    spline = make_interp_spline(t_grid, values, k=2)
    at_knots = spline(t_grid)
    scale = np.abs(values).max() or 1.0
    err = np.abs(at_knots - values).max() / scale
    if err > 1e-12:
        raise CurlTDError(f"spline fit failed to reproduce knots "
                          f"(relative error {err:.3e})")
    return TDTable(direction=direction, t_grid=t_grid, values=values,
                   spline=spline, provenance=dict(provenance or {}))


def material_hash(pair):
    """Stable hash of the material parameters for table provenance."""
    payload = {"mode": pair.mode, "nu1": pair.nu1, "nu2": pair.nu_two,
               "law": [pair.law.nu0, pair.law.q1, pair.law.q2, pair.law.q3]}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def precompute(pair, direction, dt=DEFAULT_DT, t_max=DEFAULT_T_MAX,
               epsilon=cell.DEFAULT_EPSILON, h=DEFAULT_TABLE_H,
               settings=fem.SolveSettings(), jobs=1, mesh=None):
    """Sweep t = 0, dt, ..., t_max solving one cell problem per point.

    Points are solved in ascending order, each warm-started from the
    previous corrector (the solutions vary smoothly in t).  Failed
    points are collected into a PartialTableError after the sweep.
    """
    if dt <= 0 or t_max <= 0:
        raise ConfigError("grid spacing and range must be positive")
    n = int(round(t_max / dt))
    if abs(n * dt - t_max) > 1e-9 * t_max or n < 2:
        raise ConfigError("t_max must be a multiple of dt with at least "
                          "two steps")
    t_grid = np.arange(n + 1) * dt

    if mesh is None:
        mesh = cell.default_cell_mesh(epsilon=epsilon, h=h)

    values = np.zeros((n + 1, 3))
    failed, causes = [], []
    warm = None
    for j in range(1, n + 1):
        u0 = t_grid[j] * _E1
        try:
            sol = cell.solve_cell(mesh, pair, direction, u0, settings,
                                  initial=warm, jobs=jobs)
            warm = sol.field
            values[j] = cell.evaluate_td_vector(sol, pair).T
        except CurlTDError as exc:
            failed.append(t_grid[j])
            causes.append(exc)
            warm = None
    if failed:
        raise PartialTableError(failed, causes)

    provenance = {"epsilon": 1.0 / float(
                      np.linalg.norm(mesh.vertices, axis=1).max()),
                  "mesh": mesh.fingerprint(),
                  "material": material_hash(pair)}
    return fit_table(direction, t_grid, values, provenance)


def eval_dJ(table, U0, P0, clamp=False):
    """dJ(U0, P0) from the table; exactly linear in P0.

    |U0| beyond the grid raises TDRangeError unless clamp is set (then
    the value at t_max is used; eval_dJ_full reports the flag).
    """
    return eval_dJ_full(table, U0, P0, clamp)[0]


def eval_dJ_full(table, U0, P0, clamp=False):
    """(value, clamped) pair; see eval_dJ."""
    U0 = np.asarray(U0, dtype=float).reshape(3)
    P0 = np.asarray(P0, dtype=float).reshape(3)
    t = np.linalg.norm(U0)
    if t < 1e-12:
        return 0.0, False
    clamped = False
    if t > table.t_max:
        if not clamp:
            raise TDRangeError(t, table.t_max)
        t = table.t_max
        clamped = True
    frame = rotation_to(U0 / np.linalg.norm(U0))
    c = frame.R.T @ P0
    return float(c @ table.spline(t)), clamped


def loo_errors(table):
    """Leave-one-out spline error at each interior knot, relative to the
    local value magnitude (interpolation-quality diagnostic)."""
    t, v = table.t_grid, table.values
    errs = []
    for j in range(1, len(t) - 1):
        keep = np.arange(len(t)) != j
        partial = make_interp_spline(t[keep], v[keep], k=2)
        predicted = partial(t[j])
        scale = np.linalg.norm(v[j]) or 1.0
        errs.append(float(np.linalg.norm(predicted - v[j]) / scale))
    return np.array(errs)


def save_table(path, table):
    """Persist as JSON; stable field order, timestamp in created_at."""
    payload = {
        "direction": table.direction,
        "delta_t": table.delta_t,
        "t_max": table.t_max,
        "rows": table.values.tolist(),
        "spline_coeffs": {
            "knots": table.spline.t.tolist(),
            "coeffs": table.spline.c.tolist(),
            "degree": int(table.spline.k),
        },
        "provenance": table.provenance,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_table(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"table not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"table file {path} is not valid JSON: {exc}") \
            from None
    try:
        direction = payload["direction"]
        dt = payload["delta_t"]
        values = np.asarray(payload["rows"], dtype=float)
        sc = payload["spline_coeffs"]
        spline = BSpline(np.asarray(sc["knots"], dtype=float),
                         np.asarray(sc["coeffs"], dtype=float),
                         int(sc["degree"]))
        provenance = payload.get("provenance", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"table file {path} is malformed: {exc}") from None
    t_grid = np.arange(len(values)) * dt
    t_grid, values = _validate_grid(t_grid, values)
    return TDTable(direction=direction, t_grid=t_grid, values=values,
                   spline=spline, provenance=provenance)
