"""Ground-truth simulators and replication studies.

Three generators are provided: the beta model itself, a logit-scale linear
mixed model (a deliberately different mechanism used to probe robustness),
and a structured-cross design where group means derive from allele effects.
The replication driver fits configurable estimators (Bayes, sample mean,
bootstrap) over repeated simulated datasets and tabulates bias, RMSE,
interval width and coverage per target.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict, replace

import numpy as np
from scipy import stats as sps

from .data import (OBSERVED, RANDOM_MISSING, CrossDesign, Dataset,
                   MissingnessMask)
from .dists import inv_logit, logit
from .diagnostics import hpd_interval, pair_order_probability, \
    posterior_predictive_pop_mean
from .model import PriorConfig, run_chains

__all__ = [
    "SimulationTruth",
    "load_truth_config",
    "simulate_beta_dataset",
    "simulate_lmm_dataset",
    "simulate_wbc_design",
    "pop_mean_truth",
    "sample_mean_estimator",
    "bootstrap_estimator",
    "replication_study",
    "ReplicationResult",
]

_KINDS = ("beta", "logit-lmm", "wbc")


@dataclass
class SimulationTruth:
    """Fixed generating values for one simulation configuration."""

    kind: str
    mu_true: np.ndarray
    alpha_true: np.ndarray
    S_true: np.ndarray
    R_true: np.ndarray
    eta_true: np.ndarray
    group_sizes: np.ndarray
    missing_fraction: float
    a_true: np.ndarray | None = None
    m_true: np.ndarray | None = None
    n_crosses: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        self.mu_true = np.asarray(self.mu_true, dtype=float)
        self.alpha_true = np.asarray(self.alpha_true, dtype=float)
        self.S_true = np.asarray(self.S_true, dtype=float)
        self.R_true = np.asarray(self.R_true, dtype=float)
        self.eta_true = np.asarray(self.eta_true, dtype=float)
        self.group_sizes = np.asarray(self.group_sizes, dtype=int)
        if self.a_true is not None:
            self.a_true = np.asarray(self.a_true, dtype=float)
        if self.m_true is not None:
            self.m_true = np.asarray(self.m_true, dtype=float)
        G, J = self.mu_true.size, self.S_true.size
        if self.kind != "wbc":
            if self.alpha_true.size != G or self.group_sizes.size != G:
                raise ValueError("alpha_true and group_sizes must match mu_true in length")
            if self.eta_true.shape != (G, J):
                raise ValueError("eta_true must be G x J")
        if self.R_true.size != J:
            raise ValueError("R_true must match S_true in length")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing_fraction must lie in [0, 1)")
        if np.any(self.mu_true <= 0) or np.any(self.mu_true >= 1):
            raise ValueError("mu_true must lie in (0, 1)")
        if np.any(self.R_true <= 0) or np.any(self.R_true >= 1):
            raise ValueError("R_true must lie in (0, 1)")

    @property
    def G(self) -> int:
        return self.mu_true.size

    @property
    def J(self) -> int:
        return self.S_true.size

    def to_json(self, path) -> None:
        d = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
             for k, v in asdict(self).items()}
        with open(path, "w") as fh:
            json.dump(d, fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "SimulationTruth":
        with open(path) as fh:
            d = json.load(fh)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown truth-config fields: {sorted(unknown)}")
        return cls(**d)


def load_truth_config(path, seed=0):
    """Read a truth JSON; returns (truth, design-or-None).

    Structured configs may omit per-cross means and instead give the
    generator inputs (a_true, m_true, n_crosses, per_group, alpha); the cross
    selection is then drawn from ``seed`` and the resulting design returned.
    """
    with open(path) as fh:
        d = json.load(fh)
    if d.get("kind") == "wbc" and "mu_true" not in d:
        required = {"a_true", "m_true", "n_crosses", "per_group",
                    "S_true", "R_true", "alpha", "missing_fraction"}
        missing = required - set(d)
        if missing:
            raise ValueError(f"{path}: structured generator config lacks {sorted(missing)}")
        design, truth = simulate_wbc_design(
            d["a_true"], d["m_true"], int(d["n_crosses"]), int(d["per_group"]),
            d["S_true"], d["R_true"], float(d["alpha"]),
            float(d["missing_fraction"]), seed)
        return truth, design
    return SimulationTruth.from_json(path), None


def _assemble(Y_full: np.ndarray, obs: np.ndarray, group: np.ndarray,
              cross_codes, dam, sire) -> tuple[Dataset, MissingnessMask]:
    n, J = Y_full.shape
    Ym = np.where(obs, Y_full, np.nan)
    ds = Dataset(Y=Ym, group_of=group,
                 tissue_gene_labels=[f"tg{j}" for j in range(J)],
                 cross_codes=list(cross_codes), dam_strain=list(dam),
                 sire_strain=list(sire), pup_ids=[f"sim{i}" for i in range(n)])
    ds.validate()
    status = np.where(obs, OBSERVED, RANDOM_MISSING).astype(np.int8)
    mask = MissingnessMask(status=status,
                           structural_map=np.zeros((len(cross_codes), J), dtype=bool))
    return ds, mask


def _missingness(n: int, J: int, frac: float, rng) -> np.ndarray:
    """Per-individual removal patterns with a guaranteed observation each."""
    obs = np.ones((n, J), dtype=bool)
    if frac <= 0.0:
        return obs
    for i in range(n):
        row = rng.random(J) >= frac
        tries = 0
        while not row.any() and tries < 100:
            row = rng.random(J) >= frac
            tries += 1
        if not row.any():
            row[rng.integers(J)] = True
        obs[i] = row
    return obs


def _clip_open(Y: np.ndarray) -> np.ndarray:
    return np.clip(Y, 0.001, 0.999)


def _group_vector(truth: SimulationTruth) -> np.ndarray:
    return np.repeat(np.arange(truth.G), truth.group_sizes)


def simulate_beta_dataset(truth: SimulationTruth, seed) -> tuple[Dataset, MissingnessMask]:
    """Draw a dataset from the beta model at the truth values."""
    if truth.kind not in ("beta", "wbc"):
        raise ValueError(f"simulate_beta_dataset requires a beta-family truth, got {truth.kind!r}")
    rng = np.random.default_rng(seed)
    group = _group_vector(truth)
    n = group.size
    mu = truth.mu_true[group]
    al = truth.alpha_true[group]
    P = rng.beta(mu * al + 1.0, (1.0 - mu) * al + 1.0)
    w = truth.S_true[None, :] * np.exp(truth.eta_true[group])
    A = P[:, None] * truth.R_true[None, :] * w + 1.0
    B = (1.0 - P[:, None]) * (1.0 - truth.R_true[None, :]) * w + 1.0
    Y = _clip_open(rng.beta(A, B))
    obs = _missingness(n, truth.J, truth.missing_fraction, rng)
    codes = [f"x{g}" for g in range(truth.G)]
    return _assemble(Y, obs, group, codes, ["damS"] * truth.G, ["sireS"] * truth.G)


def simulate_lmm_dataset(truth: SimulationTruth, seed) -> tuple[Dataset, MissingnessMask]:
    """Draw a dataset from the logit-scale linear mixed model.

    logit(Y_ij) = logit(mu_g) + delta_i + logit(R_j) + N(0, 1/S_j), with
    delta_i ~ N(0, 1/alpha_g).  Values are clipped into [0.001, 0.999].
    """
    if truth.kind != "logit-lmm":
        raise ValueError(f"simulate_lmm_dataset requires kind 'logit-lmm', got {truth.kind!r}")
    rng = np.random.default_rng(seed)
    group = _group_vector(truth)
    n = group.size
    mu_logit = logit(truth.mu_true)[group]
    delta = rng.normal(0.0, np.sqrt(1.0 / truth.alpha_true[group]))
    bias = logit(truth.R_true)
    sd = np.sqrt(1.0 / truth.S_true)
    Z = mu_logit[:, None] + delta[:, None] + bias[None, :] \
        + rng.normal(0.0, 1.0, size=(n, truth.J)) * sd[None, :]
    Y = _clip_open(inv_logit(Z))
    obs = _missingness(n, truth.J, truth.missing_fraction, rng)
    codes = [f"x{g}" for g in range(truth.G)]
    return _assemble(Y, obs, group, codes, ["damS"] * truth.G, ["sireS"] * truth.G)


def simulate_wbc_design(a_true, m_true, n_crosses: int, per_group: int,
                        S_true, R_true, alpha: float, missing_fraction: float,
                        seed) -> tuple[CrossDesign, SimulationTruth]:
    """Random distinct ordered allele pairs covering every allele.

    Returns the cross design and a 'wbc' truth whose per-cross means follow
    the additive/parent-of-origin map; eta truth is zero.
    """
    a_true = np.asarray(a_true, dtype=float)
    m_true = np.asarray(m_true, dtype=float)
    K = a_true.size
    if m_true.size != K:
        raise ValueError("a_true and m_true must have equal length")
    if n_crosses > K * (K - 1):
        raise ValueError(f"at most {K*(K-1)} distinct ordered pairs exist for {K} alleles")
    if 2 * n_crosses < K:
        raise ValueError(f"{n_crosses} crosses cannot cover {K} alleles")
    rng = np.random.default_rng(seed)
    pairs = [(d, s) for d in range(K) for s in range(K) if d != s]
    for _ in range(10_000):
        pick = rng.choice(len(pairs), size=n_crosses, replace=False)
        chosen = [pairs[k] for k in pick]
        covered = {d for d, _ in chosen} | {s for _, s in chosen}
        if len(covered) == K:
            break
    else:
        raise ValueError("could not cover every allele; is the configuration feasible?")
    dam = np.array([d for d, _ in chosen], dtype=np.int64)
    sire = np.array([s for _, s in chosen], dtype=np.int64)
    m_free = np.zeros(K, dtype=bool)
    for k in range(K):
        m_free[k] = bool(np.any(dam == k) and np.any(sire == k))
    design = CrossDesign(alleles=[f"A{k}" for k in range(K)],
                         po_groups=[f"A{k}" for k in range(K)],
                         dam=dam, sire=sire, po_dam=dam.copy(), po_sire=sire.copy(),
                         m_free=m_free)
    lm = (a_true[dam] + m_true[dam]) - (a_true[sire] - m_true[sire])
    mu_true = inv_logit(lm)
    G = n_crosses
    J = np.asarray(S_true).size
    truth = SimulationTruth(kind="wbc", mu_true=mu_true,
                            alpha_true=np.full(G, float(alpha)),
                            S_true=np.asarray(S_true, dtype=float),
                            R_true=np.asarray(R_true, dtype=float),
                            eta_true=np.zeros((G, J)),
                            group_sizes=np.full(G, per_group),
                            missing_fraction=missing_fraction,
                            a_true=a_true, m_true=m_true, n_crosses=n_crosses)
    return design, truth


def wbc_dataset(design: CrossDesign, truth: SimulationTruth, seed):
    """Beta-model dataset for a structured design, with allele-named parents."""
    ds, mask = simulate_beta_dataset(truth, seed)
    ds.cross_codes = [f"{design.alleles[design.dam[g]]}x{design.alleles[design.sire[g]]}"
                      for g in range(truth.G)]
    ds.dam_strain = [design.alleles[design.dam[g]] for g in range(truth.G)]
    ds.sire_strain = [design.alleles[design.sire[g]] for g in range(truth.G)]
    return ds, mask


def pop_mean_truth(truth: SimulationTruth, n_sim: int = 100_000, seed=0) -> np.ndarray:
    """Per-cross population mean by forward simulation at the truth values."""
    rng = np.random.default_rng(seed)
    out = np.empty(truth.G)
    for g in range(truth.G):
        if truth.kind in ("beta", "wbc"):
            p = rng.beta(truth.mu_true[g] * truth.alpha_true[g] + 1.0,
                         (1.0 - truth.mu_true[g]) * truth.alpha_true[g] + 1.0, size=n_sim)
            w = truth.S_true[None, :] * np.exp(truth.eta_true[g])[None, :]
            A = p[:, None] * truth.R_true[None, :] * w + 1.0
            B = (1.0 - p[:, None]) * (1.0 - truth.R_true[None, :]) * w + 1.0
            out[g] = rng.beta(A, B).mean()
        else:
            delta = rng.normal(0.0, math.sqrt(1.0 / truth.alpha_true[g]), size=n_sim)
            z = logit(truth.mu_true[g]) + delta[:, None] + logit(truth.R_true)[None, :] \
                + rng.normal(0.0, 1.0, size=(n_sim, truth.J)) / np.sqrt(truth.S_true)[None, :]
            out[g] = inv_logit(z).mean()
    return out


def sample_mean_estimator(dataset: Dataset, level: float = 0.95):
    """Unweighted per-cross mean of observed cells with a t-based interval."""
    est = np.empty(dataset.G)
    lo = np.empty(dataset.G)
    hi = np.empty(dataset.G)
    for g in range(dataset.G):
        cells = dataset.Y[dataset.group_of == g]
        cells = cells[~np.isnan(cells)]
        if cells.size == 0:
            raise ValueError(f"cross {g} has no observed cells")
        est[g] = cells.mean()
        if cells.size < 2:
            raise ValueError(f"cross {g} needs >= 2 observed cells for an interval")
        half = sps.t.ppf(0.5 + level / 2.0, cells.size - 1) * cells.std(ddof=1) / math.sqrt(cells.size)
        lo[g] = est[g] - half
        hi[g] = est[g] + half
    return est, lo, hi


def bootstrap_estimator(dataset: Dataset, B: int = 1000, level: float = 0.95, seed=0):
    """Percentile bootstrap over whole individuals within each cross."""
    if B < 200:
        raise ValueError("need B >= 200 bootstrap resamples")
    rng = np.random.default_rng(seed)
    est = np.empty(dataset.G)
    lo = np.empty(dataset.G)
    hi = np.empty(dataset.G)
    tail = (1.0 - level) / 2.0
    for g in range(dataset.G):
        rows = np.nonzero(dataset.group_of == g)[0]
        if rows.size == 0:
            raise ValueError(f"cross {g} has no individuals")
        cells = dataset.Y[rows]
        all_vals = cells[~np.isnan(cells)]
        est[g] = all_vals.mean()
        boots = np.empty(B)
        for b in range(B):
            pick = rng.integers(rows.size, size=rows.size)
            vals = cells[pick]
            vals = vals[~np.isnan(vals)]
            boots[b] = vals.mean() if vals.size else est[g]
        lo[g] = np.quantile(boots, tail)
        hi[g] = np.quantile(boots, 1.0 - tail)
    return est, lo, hi


@dataclass
class EstimateRecord:
    est: np.ndarray   # (n_reps, n_targets)
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class ReplicationResult:
    """Per-replication interval estimates grouped by target family."""

    families: dict            # family -> {"truth": vector, "names": [...], "estimators": {...}}
    pair_order_p: np.ndarray | None
    pair: tuple[int, int] | None
    n_reps: int
    failures: list[str] = field(default_factory=list)

    def metrics(self, family: str, estimator: str) -> dict:
        fam = self.families[family]
        rec: EstimateRecord = fam["estimators"][estimator]
        truth = fam["truth"]
        bias = rec.est - truth[None, :]
        cover = (rec.lo <= truth[None, :]) & (truth[None, :] <= rec.hi)
        n = rec.est.shape[0]
        cov = cover.mean(axis=0)
        return {
            "bias": bias.mean(axis=0),
            "rmse": np.sqrt((bias ** 2).mean(axis=0)),
            "width": (rec.hi - rec.lo).mean(axis=0),
            "coverage": cov,
            "coverage_mc_se": np.sqrt(cov * (1.0 - cov) / n),
        }

    @property
    def power(self) -> float | None:
        if self.pair_order_p is None:
            return None
        return float(np.mean(self.pair_order_p < 0.05))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for family, fam in self.families.items():
                writer.writerow([f"# family {family}", *fam["names"]])
                writer.writerow(["truth", "", *[repr(float(v)) for v in fam["truth"]]])
                for name in fam["estimators"]:
                    met = self.metrics(family, name)
                    for metric in ("bias", "rmse", "width", "coverage"):
                        writer.writerow([name, metric,
                                         *[repr(float(v)) for v in met[metric]]])
                    writer.writerow([name, "coverage_mc_se",
                                     *[repr(float(v)) for v in met["coverage_mc_se"]]])
            if self.pair_order_p is not None:
                writer.writerow([f"# order test mu[{self.pair[0]}] vs mu[{self.pair[1]}]",
                                 "power", repr(self.power)])
            if self.failures:
                writer.writerow(["# failures", len(self.failures)])


def _fit_bayes(dataset, mask, config, design, n_chains, pop_n_sim, level, rng_pp):
    store = run_chains(dataset, mask, config, n_chains=n_chains, design=design)
    G = dataset.G
    mu_est = np.empty(G)
    mu_lo = np.empty(G)
    mu_hi = np.empty(G)
    for g in range(G):
        draws = store.pooled(f"mu[{g}]")
        mu_est[g] = draws.mean()
        mu_lo[g], mu_hi[g] = hpd_interval(draws, level)
    pop_est = np.full(G, np.nan)
    pop_lo = np.full(G, np.nan)
    pop_hi = np.full(G, np.nan)
    if pop_n_sim > 0:
        for g in range(G):
            draws = posterior_predictive_pop_mean(store, g, n_sim=pop_n_sim,
                                                  rng=rng_pp, max_draws=400)
            pop_est[g] = draws.mean()
            pop_lo[g], pop_hi[g] = hpd_interval(draws, level)
    return store, (mu_est, mu_lo, mu_hi), (pop_est, pop_lo, pop_hi)


def replication_study(truth: SimulationTruth, n_reps: int, estimators=("bayes",),
                      seed=0, fit_config: PriorConfig | None = None,
                      n_chains: int = 1, pop_n_sim: int = 20_000,
                      bootstrap_B: int = 1000, level: float = 0.95,
                      order_pair: tuple[int, int] | None = None,
                      design: CrossDesign | None = None,
                      pin_m: bool = False) -> ReplicationResult:
    """Simulate, fit, and tabulate bias/RMSE/width/coverage over replications.

    ``order_pair=(g1, g2)`` additionally records the posterior order-reversal
    probability between two cross means per replication (requires "bayes").
    A 'wbc' truth with a supplied design keeps that design fixed and scores
    cross means, population means, and allele effects; with ``design=None``
    the random cross selection is redrawn every replication (the reference
    procedure) and only the allele effects, whose truth is fixed, are scored.
    ``pin_m=True`` fits with every parent-of-origin effect fixed at zero.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    unknown = set(estimators) - {"bayes", "mean", "bootstrap"}
    if unknown:
        raise ValueError(f"unknown estimators: {sorted(unknown)}")
    redraw_design = truth.kind == "wbc" and design is None
    if redraw_design and set(estimators) != {"bayes"}:
        raise ValueError("redrawn-design replication scores allele effects, "
                         "which only the Bayes estimator provides")
    if order_pair is not None and "bayes" not in estimators:
        raise ValueError("the order test needs the Bayes estimator")
    if fit_config is None:
        fit_config = PriorConfig(iterations=2000)

    G = truth.G
    fams: dict = {}
    if not redraw_design:
        pop_true = pop_mean_truth(truth, seed=np.random.SeedSequence(seed).spawn(1)[0])
        fams["mu"] = {"truth": truth.mu_true.copy(),
                      "names": [f"mu[{g}]" for g in range(G)], "estimators": {}}
        fams["pop"] = {"truth": pop_true,
                       "names": [f"pop[{g}]" for g in range(G)], "estimators": {}}
    if truth.kind == "wbc":
        Ka = truth.a_true.size
        fams["a"] = {"truth": truth.a_true.copy(),
                     "names": [f"a[{k}]" for k in range(Ka)], "estimators": {}}
    per_family_members: dict = {fam: [] for fam in fams}
    for name in estimators:
        if not redraw_design:
            per_family_members["mu"].append(name)
            per_family_members["pop"].append(name)
        if truth.kind == "wbc" and name == "bayes":
            per_family_members["a"].append(name)

    store_rows: dict = {fam: {est: ([], [], []) for est in per_family_members[fam]}
                        for fam in fams}
    pair_p: list[float] = []
    failures: list[str] = []

    rep_seeds = np.random.SeedSequence(seed).spawn(n_reps)
    for r in range(n_reps):
        sim_seed, fit_seed, aux_seed = rep_seeds[r].spawn(3)
        try:
            rep_design = design
            if truth.kind == "logit-lmm":
                dataset, mask = simulate_lmm_dataset(truth, sim_seed)
            elif truth.kind == "wbc":
                if redraw_design:
                    design_seed, sim_seed = sim_seed.spawn(2)
                    rep_design, rep_truth = simulate_wbc_design(
                        truth.a_true, truth.m_true, truth.n_crosses,
                        int(truth.group_sizes[0]), truth.S_true, truth.R_true,
                        float(truth.alpha_true[0]), truth.missing_fraction,
                        design_seed)
                else:
                    rep_truth = truth
                if pin_m:
                    rep_design = replace(rep_design,
                                         m_free=np.zeros(rep_design.K_m, dtype=bool))
                dataset, mask = wbc_dataset(rep_design, rep_truth, sim_seed)
            else:
                dataset, mask = simulate_beta_dataset(truth, sim_seed)
            aux_rng = np.random.default_rng(aux_seed)

            if "bayes" in estimators:
                cfg = PriorConfig(**{**fit_config.__dict__,
                                     "seed": int(fit_seed.generate_state(1)[0] % (2**31))})
                store, mu_t, pop_t = _fit_bayes(dataset, mask, cfg,
                                                rep_design if truth.kind == "wbc" else None,
                                                n_chains,
                                                0 if redraw_design else pop_n_sim,
                                                level, aux_rng)
                if not redraw_design:
                    for arrs, fam in ((mu_t, "mu"), (pop_t, "pop")):
                        for part, acc in zip(arrs, store_rows[fam]["bayes"]):
                            acc.append(part)
                if truth.kind == "wbc":
                    Ka = truth.a_true.size
                    a_est = np.empty(Ka)
                    a_lo = np.empty(Ka)
                    a_hi = np.empty(Ka)
                    for k in range(Ka):
                        draws = store.pooled(f"a[{k}]")
                        a_est[k] = draws.mean()
                        a_lo[k], a_hi[k] = hpd_interval(draws, level)
                    for part, acc in zip((a_est, a_lo, a_hi), store_rows["a"]["bayes"]):
                        acc.append(part)
                if order_pair is not None:
                    g1, g2 = order_pair
                    pair_p.append(pair_order_probability(store.pooled(f"mu[{g1}]"),
                                                         store.pooled(f"mu[{g2}]")))
            if "mean" in estimators:
                triple = sample_mean_estimator(dataset, level)
                for fam in ("mu", "pop"):
                    for part, acc in zip(triple, store_rows[fam]["mean"]):
                        acc.append(part)
            if "bootstrap" in estimators:
                triple = bootstrap_estimator(dataset, B=bootstrap_B, level=level,
                                             seed=aux_rng)
                for fam in ("mu", "pop"):
                    for part, acc in zip(triple, store_rows[fam]["bootstrap"]):
                        acc.append(part)
        except Exception as exc:
            failures.append(f"replication {r}: {exc}")

    done = n_reps - len(failures)
    if done == 0:
        raise RuntimeError("every replication failed: " + "; ".join(failures[:3]))
    for fam, members in store_rows.items():
        for est, (e, l, h) in members.items():
            fams[fam]["estimators"][est] = EstimateRecord(
                est=np.asarray(e), lo=np.asarray(l), hi=np.asarray(h))
    fams = {k: v for k, v in fams.items() if v["estimators"]}
    return ReplicationResult(families=fams,
                             pair_order_p=np.asarray(pair_p) if pair_p else None,
                             pair=order_pair, n_reps=done, failures=failures)
