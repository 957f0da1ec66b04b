"""Posterior summaries and convergence diagnostics.

Highest-posterior-density intervals use the shortest-contiguous-window
construction on sorted draws.  The potential scale reduction factor follows
Gelman and Rubin (1992) with the Brooks and Gelman (1998) multivariate
variant; the 95% quantile form inflates the ratio by the sampling spread of
the between/within variance estimate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

__all__ = [
    "hpd_interval",
    "psrf",
    "psrf_multivariate",
    "autocorrelation",
    "tail_probability",
    "pair_order_probability",
    "posterior_predictive_pop_mean",
    "ChainSummary",
    "summarize_store",
    "write_summary_csv",
]


def hpd_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Shortest contiguous interval containing ceil(level * M) sorted draws."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = x.size
    if m < 20:
        raise ValueError(f"need at least 20 samples for an HPD interval, got {m}")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    k = int(math.ceil(level * m))
    if k >= m:
        return float(x[0]), float(x[-1])
    widths = x[k - 1:] - x[: m - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def _psrf_parts(chains: np.ndarray):
    mchains, length = chains.shape
    means = chains.mean(axis=1)
    variances = chains.var(axis=1, ddof=1)
    W = variances.mean()
    B = length * means.var(ddof=1)
    var_plus = (length - 1) / length * W + B / length
    return W, B, var_plus, means, variances


def psrf(chains, quantile: bool = False) -> float:
    """Univariate potential scale reduction factor.

    With ``quantile=True`` returns the 95% upper-quantile variant: the ratio
    is inflated by the sampling distribution of the pooled-variance estimate
    (an F quantile on the between/within ratio), matching the "maximum 95%
    quantile" convention used in convergence reporting.
    """
    arr = _as_chain_array(chains)
    m, length = arr.shape
    W, B, var_plus, means, variances = _psrf_parts(arr)
    if W <= 0:
        return 1.0
    rhat2 = var_plus / W + B / (length * m * W)
    if quantile:
        # scale the B contribution by the upper 97.5% F quantile; the fixed
        # W-part of the ratio is unaffected by between-chain noise
        # degrees of freedom of W from the spread of the per-chain variances
        df_w = 2.0 * W**2 * m / _var_of_w(variances)
        fq = sps.f.ppf(0.975, m - 1, df_w)
        rhat2 = (length - 1) / length + (m + 1) / (length * m) * (B / W) * fq
    return float(math.sqrt(max(rhat2, 1.0)))


def _var_of_w(variances: np.ndarray) -> float:
    v = variances.var(ddof=1) if variances.size > 1 else 0.0
    return max(v, 1e-300)


def _as_chain_array(chains) -> np.ndarray:
    arr = np.asarray([np.asarray(c, dtype=float).ravel() for c in chains])
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("need at least 2 chains")
    lengths = {np.asarray(c).size for c in chains}
    if len(lengths) > 1:
        raise ValueError(f"chains must have equal lengths, got {sorted(lengths)}")
    if arr.shape[1] < 50:
        raise ValueError("need chain length >= 50 for a stable PSRF")
    return arr


def psrf_multivariate(chains) -> float:
    """Brooks-Gelman multivariate PSRF over a parameter block.

    ``chains`` is (m, length, p).  Returns sqrt of the largest-eigenvalue
    scale-reduction estimate.
    """
    arr = np.asarray(chains, dtype=float)
    if arr.ndim != 3 or arr.shape[0] < 2:
        raise ValueError("need an (m, length, p) array with m >= 2")
    m, length, p = arr.shape
    if length < 50:
        raise ValueError("need chain length >= 50")
    means = arr.mean(axis=1)
    W = np.zeros((p, p))
    for c in range(m):
        dev = arr[c] - means[c]
        W += dev.T @ dev / (length - 1)
    W /= m
    grand = means.mean(axis=0)
    dev = means - grand
    B_over_n = dev.T @ dev / (m - 1)
    W += np.eye(p) * 1e-12 * max(np.trace(W) / p, 1e-300)
    lam = float(np.max(np.real(np.linalg.eigvals(np.linalg.solve(W, B_over_n)))))
    rhat2 = (length - 1) / length + (m + 1) / m * lam
    return float(math.sqrt(max(rhat2, 1.0)))


def autocorrelation(samples, lags) -> np.ndarray:
    """Empirical lag-k autocorrelations of a single chain."""
    x = np.asarray(samples, dtype=float).ravel()
    x = x - x.mean()
    denom = float(np.dot(x, x))
    out = []
    for k in np.atleast_1d(lags):
        k = int(k)
        if not 0 <= k < x.size:
            raise ValueError(f"lag {k} out of range for {x.size} samples")
        out.append(1.0 if denom == 0 else float(np.dot(x[:-k] if k else x, x[k:]) / denom))
    return np.asarray(out)


def tail_probability(samples, threshold: float = 0.5) -> float:
    """Two-sided posterior tail probability 2*min(P(x > t), P(x < t)).

    Reported with floor 2/M: a value below the floor means "no draws on one
    side", which the finite sample cannot distinguish from probability zero.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need nonempty samples")
    above = float(np.mean(x > threshold))
    below = float(np.mean(x < threshold))
    p = 2.0 * min(above, below)
    return max(p, 2.0 / x.size) if p == 0.0 else p


def pair_order_probability(samples_1, samples_2) -> float:
    """Two-sided posterior probability of order reversal, on paired draws."""
    a = np.asarray(samples_1, dtype=float).ravel()
    b = np.asarray(samples_2, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"paired draws must have equal length, got {a.size} and {b.size}")
    if a.size == 0:
        raise ValueError("need nonempty samples")
    p = 2.0 * min(float(np.mean(a > b)), float(np.mean(b > a)))
    return max(p, 2.0 / a.size) if p == 0.0 else p


def posterior_predictive_pop_mean(store, g: int, n_sim: int = 100_000,
                                  viable_cols=None, rng=None,
                                  max_draws: int | None = None) -> np.ndarray:
    """Population-mean draws for cross g via forward simulation per retained draw.

    For each retained posterior draw, simulates ``n_sim`` individuals from the
    latent level and one measurement per viable column from the observation
    level, returning the grand mean.  ``viable_cols`` restricts to measurable
    columns (default: all).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    mu = store.pooled(f"mu[{g}]")
    alpha = store.pooled(f"alpha[{g}]")
    _, S = store.block("S")
    _, R = store.block("R")
    S = S.reshape(-1, S.shape[-1])
    R = R.reshape(-1, R.shape[-1])
    J = S.shape[1]
    cols = np.arange(J) if viable_cols is None else np.asarray(viable_cols, dtype=int)
    if cols.size == 0:
        raise ValueError(f"cross {g} has no viable columns")
    eta = np.zeros((mu.size, cols.size))
    for c, j in enumerate(cols):
        name = f"eta[{g},{j}]"
        if name in store.names:
            eta[:, c] = store.pooled(name)
    T = mu.size
    take = np.arange(T)
    if max_draws is not None and T > max_draws:
        take = np.linspace(0, T - 1, max_draws).astype(int)
    out = np.empty(take.size)
    for t_i, t in enumerate(take):
        p = rng.beta(mu[t] * alpha[t] + 1.0, (1.0 - mu[t]) * alpha[t] + 1.0, size=n_sim)
        total = 0.0
        for c, j in enumerate(cols):
            w = S[t, j] * math.exp(eta[t, c])
            a = p * R[t, j] * w + 1.0
            b = (1.0 - p) * (1.0 - R[t, j]) * w + 1.0
            total += rng.beta(a, b).sum()
        out[t_i] = total / (n_sim * cols.size)
    return out


@dataclass
class ChainSummary:
    """Per-parameter posterior summary over one or more chains."""

    names: list[str]
    mean: np.ndarray
    sd: np.ndarray
    hpd_lower: np.ndarray
    hpd_upper: np.ndarray
    level: float
    psrf: np.ndarray                  # NaN when only one chain
    autocorr_lag: int
    autocorr: np.ndarray
    extras: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"posterior summary ({self.level:.0%} HPD, lag-{self.autocorr_lag} autocorrelation)"]
        header = f"{'parameter':>14} {'mean':>10} {'sd':>10} {'hpd_lo':>10} {'hpd_hi':>10} {'psrf':>8} {'acf':>8}"
        lines.append(header)
        for k, nm in enumerate(self.names):
            r = self.psrf[k]
            lines.append(f"{nm:>14} {self.mean[k]:>10.4f} {self.sd[k]:>10.4f} "
                         f"{self.hpd_lower[k]:>10.4f} {self.hpd_upper[k]:>10.4f} "
                         f"{'-' if np.isnan(r) else format(r, '.3f'):>8} "
                         f"{self.autocorr[k]:>8.3f}")
        for key, val in self.extras.items():
            lines.append(f"{key}: {val}")
        return "\n".join(lines) + "\n"


def summarize_store(store, level: float = 0.95, autocorr_lag: int = 5) -> ChainSummary:
    """Summarize every stored parameter; PSRF requires >= 2 chains."""
    arr = store.stacked()
    m, length, p = arr.shape
    pooled = arr.reshape(-1, p)
    mean = pooled.mean(axis=0)
    sd = pooled.std(axis=0, ddof=1)
    lo = np.empty(p)
    hi = np.empty(p)
    rhat = np.full(p, np.nan)
    acf = np.empty(p)
    for k in range(p):
        lo[k], hi[k] = hpd_interval(pooled[:, k], level)
        if m >= 2 and length >= 50 and sd[k] > 0:
            rhat[k] = psrf(arr[:, :, k])
        lag = min(autocorr_lag, length - 1)
        acf[k] = autocorrelation(arr[0, :, k], lag)[0] if sd[k] > 0 else 1.0
    extras = {}
    if m >= 2 and length >= 50:
        finite = rhat[np.isfinite(rhat)]
        if finite.size:
            extras["max_univariate_psrf"] = round(float(np.max(finite)), 4)
    return ChainSummary(names=list(store.names), mean=mean, sd=sd, hpd_lower=lo,
                        hpd_upper=hi, level=level, psrf=rhat,
                        autocorr_lag=autocorr_lag, autocorr=acf, extras=extras)


def write_summary_csv(summary: ChainSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parameter", "mean", "sd", "hpd_lower", "hpd_upper",
                         "psrf", f"autocorr_lag{summary.autocorr_lag}"])
        for k, nm in enumerate(summary.names):
            writer.writerow([nm, repr(float(summary.mean[k])), repr(float(summary.sd[k])),
                             repr(float(summary.hpd_lower[k])), repr(float(summary.hpd_upper[k])),
                             "" if np.isnan(summary.psrf[k]) else repr(float(summary.psrf[k])),
                             repr(float(summary.autocorr[k]))])
