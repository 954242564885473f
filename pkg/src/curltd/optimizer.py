"""Objective on the air gap, adjoint solve, per-tet derivative field
through the precomputed tables, and the level-set one-shot update."""

import csv
import json
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import cell, fem, generators, table as tb, vtkio
from .errors import ConfigError, CurlTDError, StageError, TDRangeError
from .material import ONE, TWO
from .mesh import AIR, AIRGAP, IRON, MAGNET

# reluctivity side per fixed region; design tets override by phase
FIXED_SIDES = {AIR: TWO, IRON: ONE, MAGNET: TWO, AIRGAP: TWO}


@dataclass(frozen=True)
class ObjectiveSpec:
    """Tracking target on the gap region.

    mode "normal": track curl u . nhat against the scalar profile bdn;
    mode "vector": track curl u against the vector profile bd.
    Profiles may be constants or per-gap-tet arrays.
    """

    mode: str = "normal"
    gap_tag: int = AIRGAP
    bdn: object = 0.0
    nhat: object = (0.0, 1.0, 0.0)
    bd: object = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.mode not in ("normal", "vector"):
            raise ConfigError(f"unknown objective mode {self.mode!r}")


def _gap_tets(mesh, spec):
    gap = np.flatnonzero(mesh.region_tag == spec.gap_tag)
    if gap.size == 0:
        raise ConfigError(f"no tets carry the gap tag {spec.gap_tag}")
    return gap


def _per_gap(value, n, width):
    arr = np.asarray(value, dtype=float)
    if width == 1:
        if arr.ndim == 0:
            return np.full(n, float(arr))
        if arr.shape == (n,):
            return arr
    else:
        if arr.shape == (3,):
            return np.broadcast_to(arr, (n, 3))
        if arr.shape == (n, 3):
            return arr
    raise ConfigError(f"objective profile has shape {arr.shape}, expected "
                      f"a constant or one entry per gap tet ({n})")


def _normal_arrays(mesh, spec, gap):
    nhat = _per_gap(spec.nhat, gap.size, 3)
    norms = np.linalg.norm(nhat, axis=1)
    if np.abs(norms - 1.0).max() > 1e-9:
        raise ConfigError("gap normal directions must be unit vectors")
    return nhat, _per_gap(spec.bdn, gap.size, 1)


def eval_J(mesh, spec, u):
    """Tracking misfit integrated over the gap tets."""
    gap = _gap_tets(mesh, spec)
    fs = fem.space(mesh)
    curls = fs.curls(u.coefficients)[gap]
    vols = fs.vols[gap]
    if spec.mode == "normal":
        nhat, bdn = _normal_arrays(mesh, spec, gap)
        mis = np.einsum("td,td->t", curls, nhat) - bdn
        return float((vols * mis**2).sum())
    bd = _per_gap(spec.bd, gap.size, 3)
    return float((vols[:, None] * (curls - bd) ** 2).sum())


def solve_adjoint(mesh, pair, side_map, u, spec, settings=fem.SolveSettings(),
                  jobs=1):
    """p solving J(u) p = -J'(u), with the state Jacobian (symmetric)."""
    gap = _gap_tets(mesh, spec)
    fs = fem.space(mesh)
    curls = fs.curls(u.coefficients)
    fvec = np.zeros((mesh.n_tets, 3))
    if spec.mode == "normal":
        nhat, bdn = _normal_arrays(mesh, spec, gap)
        mis = np.einsum("td,td->t", curls[gap], nhat) - bdn
        fvec[gap] = -2.0 * mis[:, None] * nhat
    else:
        bd = _per_gap(spec.bd, gap.size, 3)
        fvec[gap] = -2.0 * (curls[gap] - bd)
    rhs = fem.accumulate_residual(fs, fvec, np.zeros(mesh.n_edges), 0.0,
                                  jobs)
    rhs[fs.dofmap.constrained] = 0.0
    system = fem.assemble_jacobian(mesh, pair, side_map,
                                   u.coefficients, settings, jobs)
    p = fem.solve_linear(system, fs.dofmap, rhs, settings)
    return fem.DiscreteField(mesh, p)


@dataclass(frozen=True)
class DesignState:
    """Level-set design: P1 nodal psi decides the phase of design tets."""

    mesh: object
    design_tets: np.ndarray
    psi: np.ndarray
    iteration: int = 0
    J: float | None = None

    def __post_init__(self):
        if self.psi.shape != (self.mesh.n_vertices,):
            raise ConfigError("psi must hold one value per mesh vertex")

    def phase_iron(self):
        """True per design tet where the mean nodal psi is positive."""
        nodal = self.psi[self.mesh.tets[self.design_tets]]
        return nodal.mean(axis=1) > 0.0

    def side_array(self):
        sides = np.empty(self.mesh.n_tets, dtype=np.int64)
        for tag, side in FIXED_SIDES.items():
            sides[self.mesh.region_tag == tag] = side
        sides[self.design_tets] = np.where(self.phase_iron(), ONE, TWO)
        return sides

    def tag_array(self):
        tags = self.mesh.region_tag.copy()
        tags[self.design_tets] = np.where(self.phase_iron(), IRON, AIR)
        return tags

    def iron_fraction(self):
        vols = fem.space(self.mesh).vols[self.design_tets]
        return float(vols[self.phase_iron()].sum() / vols.sum())


def initial_state(mesh, design_tags=(IRON,), psi0=1.0):
    """All-ferromagnetic start: constant positive psi on every node."""
    design = np.flatnonzero(np.isin(mesh.region_tag, design_tags))
    if design.size == 0:
        raise ConfigError(f"no design tets carry tags {design_tags}")
    return DesignState(mesh=mesh, design_tets=design,
                       psi=np.full(mesh.n_vertices, float(psi0)))


def td_field(mesh, tables, u, p, state, clamp=False):
    """Per-tet derivative values over the design region (0 elsewhere).

    Direction per phase: AIR tets query the iron-insertion table,
    IRON tets the air-insertion table.  Returns (values, n_clamped);
    out-of-range magnitudes abort unless clamp is set.
    """
    for key in (cell.INSERT_A1_INTO_A2, cell.INSERT_A2_INTO_A1):
        if key not in tables:
            raise ConfigError(f"missing table for direction {key}")
    fs = fem.space(mesh)
    curls_u = fs.curls(u.coefficients)
    curls_p = fs.curls(p.coefficients)
    iron = state.phase_iron()

    values = np.zeros(mesh.n_tets)
    out_of_range = []
    n_clamped = 0
    for k, t in enumerate(state.design_tets):
        table = tables[cell.INSERT_A2_INTO_A1] if iron[k] \
            else tables[cell.INSERT_A1_INTO_A2]
        try:
            values[t], clamped = tb.eval_dJ_full(table, curls_u[t],
                                                 curls_p[t], clamp)
            n_clamped += clamped
        except TDRangeError as exc:
            out_of_range.append((int(t), exc.t))
    if out_of_range:
        worst = max(x for _, x in out_of_range)
        raise TDRangeError(worst, table.t_max) from None
    return values, n_clamped


def levelset_update(state, td_values, s):
    """One convex-combination step toward the normalized derivative.

    psi_new = (1-s) psi + s * g on design-region nodes, where g is the
    nodal volume-average of td/||td||_{L2(design)}.  A vanishing field
    is a no-op with a warning.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"step size must lie in (0, 1), got {s}")
    mesh = state.mesh
    design = state.design_tets
    vols = fem.space(mesh).vols[design]
    td = np.asarray(td_values, dtype=float)[design]

    norm = np.sqrt((vols * td**2).sum())
    if norm == 0.0:
        warnings.warn("level-set update skipped: derivative field is zero "
                      "on the design region")
        return state
    g_tet = td / norm

    num = np.zeros(mesh.n_vertices)
    den = np.zeros(mesh.n_vertices)
    verts = mesh.tets[design]
    np.add.at(num, verts, (vols * g_tet)[:, None])
    np.add.at(den, verts, np.broadcast_to(vols[:, None], verts.shape))
    design_nodes = den > 0.0

    psi = state.psi.copy()
    psi[design_nodes] = (1.0 - s) * psi[design_nodes] \
        + s * num[design_nodes] / den[design_nodes]
    return replace(state, psi=psi, iteration=state.iteration + 1, J=None)


@dataclass(frozen=True)
class RunReport:
    """Outcome of a one-shot run: per-iteration objective values and iron
    volume fractions (length K+1), clamp counts per update (length K), and
    the artifact files written under output_dir."""

    J_history: tuple
    iron_fractions: tuple
    clamped_counts: tuple
    output_dir: str
    artifacts: tuple


@contextmanager
def _stage(name):
    try:
        yield
    except CurlTDError as exc:
        raise StageError(name, exc) from exc


def _snapshot(out, name, mesh, state, u, td=None):
    cell_data = {"curl_mag": np.linalg.norm(fem.space(mesh).curls(
        u.coefficients), axis=1)}
    if td is not None:
        cell_data["td"] = np.asarray(td, dtype=float)
    vtkio.write_vtk(out / name, mesh, cell_data=cell_data,
                    point_data={"psi": state.psi},
                    title=f"iteration {state.iteration}")
    return name


def optimize(config):
    """Run the one-shot loop: solve state, evaluate J, solve adjoint, build
    the derivative field, update the level set, re-solve; K times.

    Writes to config.output_dir: history.csv (iteration, J, iron fraction),
    one VTK per update carrying the pre-update psi / |curl u| / td, a final
    VTK without td (nothing follows it), and the final design state as
    JSON.  Any stage failure raises StageError naming the stage.
    """
    opt = config.optimization
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []

    with _stage("setup"):
        mesh = generators.generate(config.geometry)
        tables = {d: tb.load_table(p) for d, p in config.tables.items()}
        mag = fem.block_magnetization(
            mesh, config.magnetization.m,
            x_range=config.magnetization.x_range,
            z_range=config.magnetization.z_range)
        state = initial_state(mesh, design_tags=opt.design_tags,
                              psi0=opt.psi0)

    J_hist, fracs, clamps = [], [], []
    u = None
    for k in range(opt.K + 1):
        with _stage("state-solve"):
            u, _ = fem.newton_solve(mesh, config.material,
                                    state.side_array(), mag,
                                    settings=config.solve, initial=u)
        with _stage("objective"):
            state = replace(state, J=eval_J(mesh, config.objective, u))
        J_hist.append(state.J)
        fracs.append(state.iron_fraction())

        if k == opt.K:
            artifacts.append(_snapshot(out, "final.vtk", mesh, state, u))
            break
        with _stage("adjoint-solve"):
            p = solve_adjoint(mesh, config.material, state.side_array(), u,
                              config.objective, settings=config.solve)
        with _stage("derivative-field"):
            td, n_clamped = td_field(mesh, tables, u, p, state,
                                     clamp=opt.clamp)
        clamps.append(n_clamped)
        artifacts.append(_snapshot(out, f"iter{k:03d}.vtk", mesh, state, u,
                                   td=td))
        with _stage("level-set-update"):
            state = levelset_update(state, td, opt.s)

    with _stage("report"):
        with open(out / "history.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "J", "iron_fraction"])
            for i, (J, f) in enumerate(zip(J_hist, fracs)):
                w.writerow([i, repr(J), repr(f)])
        artifacts.append("history.csv")
        final = {"iteration": state.iteration, "J": state.J,
                 "iron_fraction": state.iron_fraction(),
                 "psi": state.psi.tolist(),
                 "design_tets": state.design_tets.tolist()}
        with open(out / "state.json", "w") as fh:
            json.dump(final, fh, indent=1)
        artifacts.append("state.json")

    return RunReport(J_history=tuple(J_hist), iron_fractions=tuple(fracs),
                     clamped_counts=tuple(clamps), output_dir=str(out),
                     artifacts=tuple(artifacts))
