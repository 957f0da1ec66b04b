"""Univariate and constraint-preserving slice sampling.

The univariate sampler follows the step-out / shrinkage construction of Neal
(2003), working with log densities throughout.  The constrained variants
update a vector along the direction Delta/(m-1) * (m e_g - 1), which preserves
a sum-to-zero constraint exactly; for vectors constrained on the logit scale
the update runs in logit coordinates with the change-of-variables Jacobian
folded into the evaluated target.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .dists import inv_logit, log_sigmoid

__all__ = [
    "SliceConfig",
    "SliceStats",
    "SliceError",
    "Constraint",
    "ConstrainedVector",
    "slice_univariate",
    "slice_sum_zero_direction",
    "logit_manifold_log_density",
    "slice_logit_manifold",
]

CONSTRAINT_TOL = 1e-9


class SliceError(ValueError):
    """Raised when a slice update cannot start from the supplied point."""


@dataclass
class SliceConfig:
    width: float = 1.0
    max_expansions: int = 32
    max_shrinks: int = 64
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("slice width must be positive")
        if self.max_expansions < 1 or self.max_shrinks < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.lower is not None and self.upper is not None and self.lower >= self.upper:
            raise ValueError("lower bound must be below upper bound")


@dataclass
class SliceStats:
    evals: int = 0
    degenerate_steps: int = 0


class Constraint(enum.Enum):
    SUM_ZERO = "sum_zero"
    SUM_LOGIT_ZERO = "sum_logit_zero"


@dataclass
class ConstrainedVector:
    values: np.ndarray
    constraint: Constraint

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("constrained vector must be a nonempty 1-D array")
        if abs(self.residual()) > CONSTRAINT_TOL:
            raise ValueError(f"constraint residual {self.residual():.3g} exceeds {CONSTRAINT_TOL}")

    def residual(self) -> float:
        if self.constraint is Constraint.SUM_ZERO:
            return float(self.values.sum())
        v = self.values
        if np.any(v <= 0) or np.any(v >= 1):
            raise ValueError("sum-logit-zero vector must lie in (0, 1)^m")
        return float((np.log(v) - np.log1p(-v)).sum())


def slice_univariate(log_f, x0, cfg: SliceConfig, rng: np.random.Generator,
                     stats: SliceStats | None = None) -> float:
    """Draw one slice-sampling update from the density exp(log_f), starting at x0.

    Returns x0 itself (and counts a degenerate step) if shrinkage exhausts
    its cap without finding a point above the slice level.
    """
    if stats is None:
        stats = SliceStats()
    lo = -math.inf if cfg.lower is None else cfg.lower
    hi = math.inf if cfg.upper is None else cfg.upper
    if not lo < x0 < hi:
        raise SliceError(f"starting point {x0} outside support ({lo}, {hi})")
    f0 = log_f(x0)
    stats.evals += 1
    if not math.isfinite(f0):
        raise SliceError(f"log density not finite at starting point {x0}")
    y = f0 + math.log(rng.random())

    u = rng.random()
    left = x0 - cfg.width * u
    right = x0 + cfg.width * (1.0 - u)
    left = max(left, lo)
    right = min(right, hi)
    for _ in range(cfg.max_expansions):
        if left <= lo:
            left = lo
            break
        stats.evals += 1
        if log_f(left) <= y:
            break
        left -= cfg.width
    left = max(left, lo)
    for _ in range(cfg.max_expansions):
        if right >= hi:
            right = hi
            break
        stats.evals += 1
        if log_f(right) <= y:
            break
        right += cfg.width
    right = min(right, hi)

    for _ in range(cfg.max_shrinks):
        x1 = left + rng.random() * (right - left)
        stats.evals += 1
        if log_f(x1) > y:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    stats.degenerate_steps += 1
    return x0


def _direction_target(log_f_multi, values: np.ndarray, g: int):
    m = values.size
    direction = np.full(m, -1.0 / (m - 1))
    direction[g] = 1.0

    def target(delta: float) -> float:
        return log_f_multi(values + delta * direction)

    return target, direction


def slice_sum_zero_direction(log_f_multi, v: ConstrainedVector, g: int, cfg: SliceConfig,
                             rng: np.random.Generator,
                             stats: SliceStats | None = None) -> ConstrainedVector:
    """Slice-update coordinate g of a sum-zero vector along Delta/(m-1)(m e_g - 1).

    The direction is affine and volume-preserving on the constraint manifold,
    so no Jacobian correction is required.  The result is recentred to absorb
    floating-point drift.
    """
    if v.constraint is not Constraint.SUM_ZERO:
        raise ValueError("slice_sum_zero_direction requires a SUM_ZERO vector")
    m = v.values.size
    if not 0 <= g < m:
        raise IndexError(f"coordinate {g} out of range for length-{m} vector")
    if m == 1:
        return v  # degenerate manifold: the single coordinate is pinned at 0
    target, direction = _direction_target(log_f_multi, v.values, g)
    delta = slice_univariate(target, 0.0, cfg, rng, stats)
    new = v.values + delta * direction
    new -= new.mean()
    return ConstrainedVector(new, Constraint.SUM_ZERO)


def logit_manifold_log_density(base_log_f_R, L: np.ndarray) -> float:
    """Target for logit-space sampling: base density at R(L) plus the exact log-Jacobian.

    The Jacobian of the componentwise inverse-logit map is prod_j R_j (1 - R_j);
    its log is accumulated through log-sigmoid identities so large |L| is safe.
    """
    L = np.asarray(L, dtype=float)
    r = inv_logit(L)
    jac = float(np.sum(log_sigmoid(L) + log_sigmoid(-L)))
    return base_log_f_R(np.atleast_1d(r)) + jac


def slice_logit_manifold(base_log_f_R, R: ConstrainedVector, j: int, cfg: SliceConfig,
                         rng: np.random.Generator,
                         stats: SliceStats | None = None) -> ConstrainedVector:
    """Slice-update coordinate j of a sum-logit-zero vector, working in logit space."""
    if R.constraint is not Constraint.SUM_LOGIT_ZERO:
        raise ValueError("slice_logit_manifold requires a SUM_LOGIT_ZERO vector")
    m = R.values.size
    if not 0 <= j < m:
        raise IndexError(f"coordinate {j} out of range for length-{m} vector")
    if m == 1:
        return ConstrainedVector(np.array([0.5]), Constraint.SUM_LOGIT_ZERO)
    L = np.log(R.values) - np.log1p(-R.values)
    L -= L.mean()
    Lvec = ConstrainedVector(L, Constraint.SUM_ZERO)

    def target(Lnew: np.ndarray) -> float:
        return logit_manifold_log_density(base_log_f_R, Lnew)

    Lvec = slice_sum_zero_direction(target, Lvec, j, cfg, rng, stats)
    return ConstrainedVector(inv_logit(Lvec.values), Constraint.SUM_LOGIT_ZERO)
