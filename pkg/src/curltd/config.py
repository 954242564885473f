"""Run configuration: strict JSON ingestion for the one-shot pipeline.

Unknown keys are rejected at every nesting level so a typo cannot
silently fall back to a default, and referenced table files must exist
when the config is loaded.
"""

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, MissingTableError
from .fem import SolveSettings
from .generators import GeometrySpec
from .material import NU0_DEFAULT, MaterialPair, SaturationLaw
from .mesh import IRON
from .cell import DIRECTIONS
from .optimizer import ObjectiveSpec


@dataclass(frozen=True)
class OptimizationParams:
    """Level-set loop knobs: step size s, update count K, range clamping,
    the initial level-set value, and which region tags are designable."""

    s: float = 0.14
    K: int = 1
    clamp: bool = False
    psi0: float = 0.5
    design_tags: tuple = (IRON,)

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ConfigError(f"step size s must lie in (0, 1), got {self.s}")
        if not (isinstance(self.K, int) and self.K >= 0):
            raise ConfigError(f"update count K must be an integer >= 0, "
                              f"got {self.K!r}")
        if len(self.design_tags) == 0:
            raise ConfigError("design_tags must name at least one region")


@dataclass(frozen=True)
class Magnetization:
    """Permanent-magnet source: M vector and the centroid x/z window that
    selects which magnet tets carry it."""

    m: tuple = (0.0, 0.0, 0.0)
    x_range: tuple = (0.25, 0.75)
    z_range: tuple = (0.25, 0.75)

    def __post_init__(self):
        if len(self.m) != 3:
            raise ConfigError(f"magnetization m must be a 3-vector, "
                              f"got {self.m}")
        for name, rng in (("x_range", self.x_range),
                          ("z_range", self.z_range)):
            if len(rng) != 2 or not rng[0] < rng[1]:
                raise ConfigError(f"{name} must be an increasing pair, "
                                  f"got {rng}")


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometrySpec
    material: MaterialPair
    tables: dict
    output_dir: str
    solve: SolveSettings = SolveSettings()
    objective: ObjectiveSpec = ObjectiveSpec()
    optimization: OptimizationParams = OptimizationParams()
    magnetization: Magnetization = Magnetization()
    seed: int = 0


def _check_keys(section, data, allowed, required=()):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {section!r} must be an object, "
                          f"got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in config section "
                          f"{section!r}; allowed: {sorted(allowed)}")
    missing = sorted(set(required) - set(data))
    if missing:
        raise ConfigError(f"config section {section!r} is missing "
                          f"required key(s) {missing}")


def _tupled(value):
    return tuple(value) if isinstance(value, list) else value


def _geometry(data):
    allowed = ("kind", "h", "extents", "slab_breaks", "r_out", "grading",
               "subdiv", "n_inner")
    _check_keys("geometry", data, allowed, required=("kind",))
    return GeometrySpec(**{k: _tupled(v) for k, v in data.items()})


def _material(data):
    _check_keys("material", data,
                ("mode", "nu0", "q1", "q2", "q3", "nu1", "nu2"),
                required=("mode",))
    mode = data["mode"]
    nu0 = float(data.get("nu0", NU0_DEFAULT))
    nu2 = data.get("nu2")
    if mode == "saturation":
        if "nu1" in data:
            raise ConfigError("material key 'nu1' only applies to linear "
                              "mode; the saturation curve is set by "
                              "nu0/q1/q2/q3")
        law = SaturationLaw(
            nu0=nu0, q1=float(data.get("q1", 200.0)),
            q2=float(data.get("q2", 0.001)), q3=float(data.get("q3", 6.0)))
        return MaterialPair(mode="saturation", law=law,
                            nu2=None if nu2 is None else float(nu2))
    if mode == "linear":
        for key in ("q1", "q2", "q3"):
            if key in data:
                raise ConfigError(f"material key {key!r} only applies to "
                                  f"saturation mode")
        if "nu1" not in data:
            raise ConfigError("linear material mode requires key 'nu1'")
        return MaterialPair(mode="linear", nu1=float(data["nu1"]),
                            nu2=nu0 if nu2 is None else float(nu2))
    raise ConfigError(f"material mode must be 'saturation' or 'linear', "
                      f"got {mode!r}")


def _solve(data):
    allowed = ("kappa", "newton_tol", "max_newton", "max_halvings",
               "linear_tol")
    _check_keys("solve", data, allowed)
    return SolveSettings(**data)


def _objective(data):
    _check_keys("objective", data, ("mode", "gap_tag", "bdn", "nhat", "bd"))
    return ObjectiveSpec(**{k: _tupled(v) for k, v in data.items()})


def _optimization(data):
    _check_keys("optimization", data,
                ("s", "K", "clamp", "psi0", "design_tags"))
    return OptimizationParams(**{k: _tupled(v) for k, v in data.items()})


def _magnetization(data):
    _check_keys("magnetization", data, ("m", "x_range", "z_range"))
    return Magnetization(**{k: _tupled(v) for k, v in data.items()})


def _tables(data, base):
    _check_keys("tables", data, DIRECTIONS, required=DIRECTIONS)
    resolved = {}
    for direction, raw in data.items():
        path = Path(raw)
        if not path.is_absolute():
            path = base / path
        if not path.is_file():
            raise MissingTableError(f"table not found for direction "
                                    f"{direction!r}: {path}")
        resolved[direction] = str(path)
    return resolved


def config_from_dict(data, base_dir="."):
    """Build a RunConfig from a parsed JSON object. Table paths resolve
    relative to base_dir."""
    top = ("geometry", "material", "solve", "objective", "tables",
           "optimization", "magnetization", "output_dir", "seed")
    _check_keys("top level", data, top,
                required=("geometry", "material", "tables", "output_dir"))
    base = Path(base_dir)
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    out_dir = data["output_dir"]
    out_path = Path(out_dir)
    if not out_path.is_absolute():
        out_path = base / out_path
    try:
        return RunConfig(
            geometry=_geometry(data["geometry"]),
            material=_material(data["material"]),
            tables=_tables(data["tables"], base),
            output_dir=str(out_path),
            solve=_solve(data.get("solve", {})),
            objective=_objective(data.get("objective", {})),
            optimization=_optimization(data.get("optimization", {})),
            magnetization=_magnetization(data.get("magnetization", {})),
            seed=seed)
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path):
    """Read a JSON run config. Relative paths inside it (tables,
    output_dir) resolve against the config file's directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") \
            from exc
    return config_from_dict(data, base_dir=path.parent)
