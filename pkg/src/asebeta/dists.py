"""Log-density kernels used throughout the model.

All densities are evaluated in log space.  The observation and latent levels
use "shifted" beta densities of the form Beta(A+1, B+1) with A, B >= 0, which
keeps the density bounded at both ends of (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, expit, gammaln

__all__ = [
    "BetaShiftParams",
    "GammaShapeScale",
    "log_beta_shifted",
    "obs_log_density",
    "latent_log_density",
    "log_gamma_density",
    "log_inv_chi_square",
    "logit",
    "inv_logit",
    "log_sigmoid",
]


@dataclass(frozen=True)
class BetaShiftParams:
    """Pseudo-count parameters of a Beta(A+1, B+1) density."""

    A: float
    B: float

    def __post_init__(self):
        if self.A < 0 or self.B < 0:
            raise ValueError(f"pseudo-counts must be nonnegative, got A={self.A}, B={self.B}")


@dataclass(frozen=True)
class GammaShapeScale:
    """Shape-scale gamma parameters; density is proportional to e^(-x/scale) x^(shape-1)."""

    shape: float
    scale: float

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError(f"shape and scale must be positive, got {self.shape}, {self.scale}")


def logit(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(x >= 1):
        raise ValueError("logit requires arguments in (0, 1)")
    out = np.log(x) - np.log1p(-x)
    return float(out) if out.ndim == 0 else out


def inv_logit(z):
    out = expit(np.asarray(z, dtype=float))
    return float(out) if out.ndim == 0 else out


def log_sigmoid(z):
    """log(inv_logit(z)), overflow-safe on both tails."""
    z = np.asarray(z, dtype=float)
    out = -np.logaddexp(0.0, -z)
    return float(out) if out.ndim == 0 else out


def log_beta_shifted(x, A, B):
    """Log density of Beta(A+1, B+1) at x, for pseudo-counts A, B >= 0."""
    x = np.asarray(x, dtype=float)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if np.any(x <= 0) or np.any(x >= 1):
        raise ValueError("log_beta_shifted requires x in the open interval (0, 1)")
    if np.any(A < 0) or np.any(B < 0):
        raise ValueError("pseudo-counts A, B must be nonnegative")
    out = A * np.log(x) + B * np.log1p(-x) - betaln(A + 1.0, B + 1.0)
    return float(out) if out.ndim == 0 else out


def obs_log_density(y, p, r, s, eta):
    """Observation-level log density: Beta(p r s e^eta + 1, (1-p)(1-r) s e^eta + 1) at y."""
    p = np.asarray(p, dtype=float)
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1) or np.any(r <= 0) or np.any(r >= 1):
        raise ValueError("p and r must lie in (0, 1)")
    if np.any(s < 0):
        raise ValueError("precision s must be nonnegative")
    w = s * np.exp(np.asarray(eta, dtype=float))
    return log_beta_shifted(y, p * r * w, (1.0 - p) * (1.0 - r) * w)


def latent_log_density(p, mu, alpha):
    """Latent-level log density: Beta(mu alpha + 1, (1-mu) alpha + 1) at p."""
    mu = np.asarray(mu, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(mu <= 0) or np.any(mu >= 1):
        raise ValueError("mu must lie in (0, 1)")
    if np.any(alpha < 0):
        raise ValueError("alpha must be nonnegative")
    return log_beta_shifted(p, mu * alpha, (1.0 - mu) * alpha)


def log_gamma_density(x, shape, scale=None):
    """Log density of the shape-scale gamma distribution, including its normalizer."""
    if isinstance(shape, GammaShapeScale):
        shape, scale = shape.shape, shape.scale
    if shape <= 0 or scale <= 0:
        raise ValueError("shape and scale must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("gamma density requires x > 0")
    out = -x / scale + (shape - 1.0) * np.log(x) - shape * np.log(scale) - gammaln(shape)
    return float(out) if out.ndim == 0 else out


def log_inv_chi_square(x, df):
    """Log density of the (non-scaled) inverse chi-square distribution with df degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("inverse chi-square density requires x > 0")
    out = -(df / 2.0 + 1.0) * np.log(x) - 1.0 / (2.0 * x) - (df / 2.0) * np.log(2.0) - gammaln(df / 2.0)
    return float(out) if out.ndim == 0 else out
