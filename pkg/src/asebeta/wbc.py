"""Structured cross means from additive allele and parent-of-origin effects.

The cross mean on the logit scale is (a_dam + m_dam) - (a_sire - m_sire):
a dam contributes its allele strength plus its parent-of-origin boost, a sire
its strength minus the boost.  Additive effects are constrained to sum to
zero; parent-of-origin effects sum to zero over the identifiable subset
(groups seen both as dam and sire) and are pinned to zero elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CrossDesign
from .dists import inv_logit
from .diagnostics import hpd_interval

__all__ = [
    "AlleleEffects",
    "mu_of_cross",
    "update_allele_effects",
    "wbc_vs_ia_report",
    "CrossComparison",
]

CONSTRAINT_TOL = 1e-9


@dataclass
class AlleleEffects:
    a: np.ndarray
    m: np.ndarray
    m_free: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        self.m_free = np.asarray(self.m_free, dtype=bool)
        if self.m.shape != self.m_free.shape:
            raise ValueError("m and m_free must have matching shapes")
        self.validate()

    def validate(self) -> None:
        if self.a.size and abs(float(self.a.sum())) > CONSTRAINT_TOL:
            raise ValueError("additive effects must sum to zero")
        free = self.m[self.m_free]
        if free.size >= 2 and abs(float(free.sum())) > CONSTRAINT_TOL:
            raise ValueError("free parent-of-origin effects must sum to zero")
        if np.any(self.m[~self.m_free] != 0.0) or (free.size == 1 and free[0] != 0.0):
            raise ValueError("pinned parent-of-origin effects must be zero")


def mu_of_cross(effects: AlleleEffects, design: CrossDesign, g: int) -> float:
    """Cross mean from Eq.-style additive and parent-of-origin effects."""
    if not 0 <= g < design.dam.size:
        raise IndexError(f"cross index {g} out of range")
    lm = (effects.a[design.dam[g]] + effects.m[design.po_dam[g]]) \
        - (effects.a[design.sire[g]] - effects.m[design.po_sire[g]])
    return float(inv_logit(lm))


def update_allele_effects(sampler, rng) -> AlleleEffects:
    """One sweep of the constrained allele-effect blocks of a structured sampler."""
    if sampler.design is None:
        raise ValueError("sampler was built without a CrossDesign")
    sampler._dispatch("a", rng)
    sampler._dispatch("m", rng)
    return AlleleEffects(a=sampler.a.copy(), m=sampler.m.copy(),
                         m_free=sampler.mfree.copy())


@dataclass
class CrossComparison:
    cross_indices: list[int]
    mean_a: np.ndarray            # per-cross posterior means, first store
    mean_b: np.ndarray
    hpd_a: np.ndarray             # (G, 2)
    hpd_b: np.ndarray
    overlap: np.ndarray           # bool per cross
    distance: float               # L2 distance between mean vectors
    correlation: float
    non_overlap_count: int = field(init=False)

    def __post_init__(self):
        self.non_overlap_count = int(np.sum(~self.overlap))

    def to_text(self) -> str:
        lines = ["cross-mean comparison"]
        for i, g in enumerate(self.cross_indices):
            flag = "" if self.overlap[i] else "  <- disjoint HPDs"
            lines.append(f"  cross {g}: {self.mean_a[i]:.4f} ({self.hpd_a[i,0]:.4f}, {self.hpd_a[i,1]:.4f})"
                         f" vs {self.mean_b[i]:.4f} ({self.hpd_b[i,0]:.4f}, {self.hpd_b[i,1]:.4f}){flag}")
        lines.append(f"  L2 distance {self.distance:.4f}, correlation {self.correlation:.4f}, "
                     f"{self.non_overlap_count} of {len(self.cross_indices)} crosses with disjoint HPDs")
        return "\n".join(lines) + "\n"


def wbc_vs_ia_report(store_a, store_b, level: float = 0.95) -> CrossComparison:
    """Compare per-cross mean posteriors between two fits of the same crosses."""
    names_a = [nm for nm in store_a.names if nm.startswith("mu[")]
    names_b = [nm for nm in store_b.names if nm.startswith("mu[")]
    if names_a != names_b:
        only_a = sorted(set(names_a) - set(names_b))
        only_b = sorted(set(names_b) - set(names_a))
        raise ValueError(f"stores cover different crosses: {only_a} vs {only_b}")
    if not names_a:
        raise ValueError("stores contain no cross means")
    G = len(names_a)
    mean_a = np.empty(G)
    mean_b = np.empty(G)
    hpd_a = np.empty((G, 2))
    hpd_b = np.empty((G, 2))
    overlap = np.empty(G, dtype=bool)
    for i, nm in enumerate(names_a):
        xa = store_a.pooled(nm)
        xb = store_b.pooled(nm)
        mean_a[i] = xa.mean()
        mean_b[i] = xb.mean()
        hpd_a[i] = hpd_interval(xa, level)
        hpd_b[i] = hpd_interval(xb, level)
        overlap[i] = hpd_a[i, 0] <= hpd_b[i, 1] and hpd_b[i, 0] <= hpd_a[i, 1]
    if G > 1 and mean_a.std() > 0 and mean_b.std() > 0:
        corr = float(np.corrcoef(mean_a, mean_b)[0, 1])
    else:
        corr = 1.0 if np.allclose(mean_a, mean_b) else float("nan")
    return CrossComparison(
        cross_indices=[int(nm[3:-1]) for nm in names_a],
        mean_a=mean_a, mean_b=mean_b, hpd_a=hpd_a, hpd_b=hpd_b,
        overlap=overlap, distance=float(np.linalg.norm(mean_a - mean_b)),
        correlation=corr)
