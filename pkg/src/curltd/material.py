"""Constitutive maps: saturating reluctivity and the linear oracle pair.

The physical side One map is y -> nu_hat(|y|) y with the analytic
saturation curve nu_hat(s) = nu0 - (nu0 - q1) exp(-q2 s^q3); side Two is
the linear air map y -> nu0 y. A linear mode (y -> nu1 y vs y -> nu2 y)
exists for tests with closed-form answers.

All maps are isotropic, so they commute with orthogonal matrices; the
Jacobian of side One is nu_hat(|y|) I + nu_hat'(|y|)/|y| * y y^T, with the
analytic limit nu_hat(0) I at y = 0 (valid because q3 >= 2 forces
nu_hat'(0) = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

NU0_DEFAULT = 1.0e7 / (4.0 * math.pi)

ONE = 1    # inclusion-candidate side (nonlinear in saturation mode)
TWO = 2    # background side (linear)

_EYE3 = np.eye(3)


@dataclass(frozen=True)
class SaturationLaw:
    """Parameters of the analytic reluctivity curve."""

    nu0: float = NU0_DEFAULT
    q1: float = 200.0
    q2: float = 0.001
    q3: float = 6.0

    def __post_init__(self):
        if not (0.0 < self.q1 < self.nu0):
            raise ConfigError(
                f"saturation law needs 0 < q1 < nu0, got q1={self.q1}, "
                f"nu0={self.nu0}")
        if not (self.q2 > 0.0):
            raise ConfigError(f"saturation law needs q2 > 0, got {self.q2}")
        if not (self.q3 >= 2.0):
            raise ConfigError(
                f"saturation law needs q3 >= 2 (so the curve is flat at "
                f"s=0), got {self.q3}")


@dataclass(frozen=True)
class MaterialPair:
    """Two constitutive maps: the candidate material (side One) and the
    background (side Two).

    mode 'saturation': side One is the saturation curve, side Two linear
    with reluctivity nu2 (default: the curve's nu0). mode 'linear': both
    sides linear with nu1, nu2. Monotonicity/Lipschitz quality is *not*
    enforced here — run check_assumptions; that keeps deliberately broken
    pairs constructible for testing.
    """

    mode: str = "saturation"
    law: SaturationLaw = SaturationLaw()
    nu1: float = 1.0
    nu2: float | None = None

    def __post_init__(self):
        if self.mode not in ("saturation", "linear"):
            raise ConfigError(f"unknown material mode {self.mode!r}")

    @property
    def nu_two(self):
        if self.nu2 is not None:
            return self.nu2
        return self.law.nu0


def nu_hat(law, s):
    """Reluctivity at field magnitude s (scalar or array); s must be >= 0."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise ValueError("field magnitude must be nonnegative")
    out = law.nu0 - (law.nu0 - law.q1) * np.exp(-law.q2 * s**law.q3)
    return out if out.ndim else float(out)


def nu_hat_prime(law, s):
    """d nu_hat / d s; zero at s=0 since q3 >= 2."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise ValueError("field magnitude must be nonnegative")
    out = ((law.nu0 - law.q1) * law.q2 * law.q3
           * s ** (law.q3 - 1.0) * np.exp(-law.q2 * s**law.q3))
    return out if out.ndim else float(out)


def _side_is_linear(pair, side):
    if side == TWO:
        return True, pair.nu_two
    if side != ONE:
        raise ValueError(f"side must be ONE or TWO, got {side!r}")
    if pair.mode == "linear":
        return True, pair.nu1
    return False, None


def eval_a(pair, side, y):
    """Apply the constitutive map of the given side to y, shape (..., 3)."""
    y = np.asarray(y, dtype=float)
    linear, nu = _side_is_linear(pair, side)
    if linear:
        return nu * y
    mag = np.linalg.norm(y, axis=-1)
    return np.asarray(nu_hat(pair.law, mag))[..., None] * y


def eval_da(pair, side, y):
    """Jacobian of the constitutive map at y: shape (..., 3, 3), symmetric."""
    y = np.asarray(y, dtype=float)
    linear, nu = _side_is_linear(pair, side)
    if linear:
        return np.broadcast_to(nu * _EYE3, y.shape + (3,)).copy()
    mag = np.asarray(np.linalg.norm(y, axis=-1))
    small = mag < 1e-12
    safe = np.where(small, 1.0, mag)
    ratio = np.asarray(np.where(small, 0.0,
                                np.asarray(nu_hat_prime(pair.law, mag)) / safe))
    nh = np.asarray(nu_hat(pair.law, mag))
    out = nh[..., None, None] * _EYE3
    out = out + ratio[..., None, None] * (y[..., :, None] * y[..., None, :])
    return out


@dataclass(frozen=True)
class AssumptionReport:
    """Monte-Carlo estimates of the monotonicity/Lipschitz constants."""

    c1_est: float     # inf (a(x)-a(y)).(x-y)/|x-y|^2  (strong monotonicity)
    c2_est: float     # sup |a(x)-a(y)|/|x-y|          (Lipschitz, map)
    c3_est: float     # sup ||da(x)-da(y)||/|x-y|      (Lipschitz, Jacobian)
    passed: bool
    n_samples: int
    radius: float


def check_assumptions(pair, n_samples=10_000, radius=10.0, seed=0):
    """Sample both sides of the pair on random point pairs in a ball.

    The pass bound on the monotonicity constant is the known infimum of
    the constitutive curve's differential reluctivity: q1 for the
    saturation mode, min(nu1, nu2) for the linear mode, each with a 1e-6
    slack for roundoff.
    """
    if n_samples < 1000:
        raise ValueError("need at least 1000 sample pairs for stable estimates")
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n_samples, 3))
    x *= (radius * rng.random(n_samples) ** (1 / 3)
          / np.linalg.norm(x, axis=1))[:, None]
    y = rng.normal(size=(n_samples, 3))
    y *= (radius * rng.random(n_samples) ** (1 / 3)
          / np.linalg.norm(y, axis=1))[:, None]

    c1, c2, c3 = np.inf, -np.inf, -np.inf
    for side in (ONE, TWO):
        ax, ay = eval_a(pair, side, x), eval_a(pair, side, y)
        dax, day = eval_da(pair, side, x), eval_da(pair, side, y)
        dxy = x - y
        d2 = np.einsum("nc,nc->n", dxy, dxy)
        dist = np.sqrt(d2)
        mono = np.einsum("nc,nc->n", ax - ay, dxy) / d2
        lip = np.linalg.norm(ax - ay, axis=1) / dist
        jlip = np.linalg.norm(dax - day, axis=(1, 2)) / dist
        c1 = min(c1, mono.min())
        c2 = max(c2, lip.max())
        c3 = max(c3, jlip.max())

    if pair.mode == "saturation":
        bound = pair.law.q1
    else:
        bound = min(pair.nu1, pair.nu_two)
    passed = bool(c1 > 0.0 and c1 >= bound * (1.0 - 1e-6))
    return AssumptionReport(float(c1), float(c2), float(c3), passed,
                            n_samples, radius)
