"""Exception hierarchy for the package.

Every error raised on a contract boundary derives from CurlTDError so the
CLI can map failures onto its exit-code contract (1 = runtime/study
failure, 2 = usage/config error).
"""


class CurlTDError(Exception):
    """Base class for all package errors."""


class MissingTableError(CurlTDError):
    """A run config references a derivative table file that does not exist."""


class ConfigError(CurlTDError):
    """Invalid or incomplete configuration (unknown keys, missing files,
    region tags without a material side, bad CLI combinations)."""


class GeometryError(CurlTDError):
    """Inconsistent geometry specification (empty slabs, non-positive mesh
    size, outer radius not exceeding the unit inclusion, ...)."""


class OrientationError(CurlTDError):
    """A tetrahedron with non-positive volume was found."""

    def __init__(self, tet_index, volume):
        self.tet_index = int(tet_index)
        self.volume = float(volume)
        super().__init__(
            f"tet {self.tet_index} has non-positive volume {self.volume:.3e}"
        )


class TagError(CurlTDError):
    """Lookup of an unknown region or boundary tag."""


class MeshFormatError(CurlTDError):
    """Malformed ASCII mesh file."""


class LocationError(CurlTDError):
    """A query point lies outside the mesh."""


class SolverError(CurlTDError):
    """Linear solve failed (singular matrix or residual above tolerance)."""


class NonconvergenceError(CurlTDError):
    """Newton iteration exhausted its budget. Carries the residual log."""

    def __init__(self, message, log):
        self.log = log
        super().__init__(message)


class TDRangeError(CurlTDError):
    """|U0| above the precomputed table range and clamping not requested."""

    def __init__(self, t, t_max):
        self.t = float(t)
        self.t_max = float(t_max)
        super().__init__(
            f"|U0| = {self.t:.6g} exceeds the table range t_max = {self.t_max:.6g}"
            " (re-issue with clamp to proceed)"
        )


class PartialTableError(CurlTDError):
    """Some grid points of a table precompute failed. Carries their t values."""

    def __init__(self, failed_t, causes):
        self.failed_t = list(failed_t)
        self.causes = list(causes)
        ts = ", ".join(f"{t:.6g}" for t in self.failed_t)
        super().__init__(f"cell solves failed at t = [{ts}]")


class ResolutionError(CurlTDError):
    """An inclusion is not resolved by the mesh (too few tets inside)."""


class StageError(CurlTDError):
    """A pipeline stage failed. Carries the stage name and the cause."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


class ResourceError(CurlTDError):
    """A study exceeded its mesh budget. Carries the largest feasible value."""

    def __init__(self, message, largest_feasible=None):
        self.largest_feasible = largest_feasible
        super().__init__(message)
