"""Hierarchical beta-regression model: state, Gibbs driver, chain storage.

The heavy per-iteration work lives in jitted kernels (``kernel.py``); this
module owns configuration, initialization, the update-order dispatch, an
independent (pure numpy) unnormalized log posterior used for coherence
checks, and CSV/JSON persistence of retained draws.

Two variants share all machinery: the exchangeable model gives each cross
mean its own hierarchical beta prior, while the structured cross-mean model
replaces the mean vector by a deterministic function of sum-zero allele and
parent-of-origin effects on the logit scale.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernel as K
from .data import (RANDOM_MISSING, STRUCTURAL_MISSING, CrossDesign, Dataset,
                   MissingnessMask)
from .dists import (GammaShapeScale, inv_logit, latent_log_density,
                    log_gamma_density, log_inv_chi_square, logit,
                    obs_log_density)

__all__ = [
    "ModelState",
    "PriorConfig",
    "GibbsSampler",
    "SampleStore",
    "run_chains",
    "DEFAULT_ORDER_EXCHANGEABLE",
    "DEFAULT_ORDER_STRUCTURED",
]

CONSTRAINT_TOL = 1e-9
LOG2PI = math.log(2.0 * math.pi)

DEFAULT_ORDER_EXCHANGEABLE = ("mu_all", "alpha_all", "mu", "alpha", "S",
                              "hyper_S", "R", "eta", "tau2_eta", "u_R", "P",
                              "impute")
DEFAULT_ORDER_STRUCTURED = ("alpha", "a", "m", "S", "hyper_S", "R", "eta",
                            "tau2_eta", "u_R", "P", "impute")


@dataclass
class PriorConfig:
    """Prior hyperparameters plus sampler tuning knobs."""

    # exponential prior on the dispersion with scale matched to the plausible
    # range of sequencing-scale concentrations; a unit scale shrinks alpha an
    # order of magnitude below the data's concentration and inflates the
    # cross-mean intervals far beyond their nominal level (see README)
    alpha: GammaShapeScale = field(default_factory=lambda: GammaShapeScale(1.0, 50.0))
    alpha_all: GammaShapeScale = field(default_factory=lambda: GammaShapeScale(0.1, 0.1))
    hyper_S: GammaShapeScale = field(default_factory=lambda: GammaShapeScale(0.1, 0.1))
    u_R: GammaShapeScale = field(default_factory=lambda: GammaShapeScale(1.0, 1.0))
    tau2_df: float = 1.0
    iterations: int = 2000
    burn_in: int | None = None        # None -> 20% of iterations
    thinning: int = 1
    seed: int = 0
    update_order: tuple[str, ...] | None = None
    width: float = 1.0                # slice width on log / logit / linear scales
    width_interval: float = 0.1       # slice width for parameters sampled on (0,1)
    max_expansions: int = 32
    max_shrinks: int = 64
    store_imputed: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.burn_in is not None and not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must lie in [0, iterations)")
        if self.tau2_df <= 0:
            raise ValueError("tau2_df must be positive")
        if self.width <= 0 or self.width_interval <= 0:
            raise ValueError("slice widths must be positive")

    def resolved_burn_in(self) -> int:
        if self.burn_in is None:
            return self.iterations // 5
        return self.burn_in


@dataclass
class ModelState:
    """Snapshot of every unobserved quantity in the model."""

    P: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray
    mu_all: float
    alpha_all: float
    S: np.ndarray
    R: np.ndarray
    eta: np.ndarray
    tau2_eta: float
    u_R: float
    xi_S: float
    chi_S: float
    Y_imputed: np.ndarray        # (n, J) with NaN outside random-missing cells
    a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    m: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def validate(self, viable: np.ndarray | None = None) -> None:
        for name, arr in (("P", self.P), ("mu", self.mu), ("R", self.R)):
            if np.any(arr <= 0) or np.any(arr >= 1):
                raise ValueError(f"{name} must lie strictly in (0, 1)")
        if not 0 < self.mu_all < 1:
            raise ValueError("mu_all must lie strictly in (0, 1)")
        for name, val in (("alpha_all", self.alpha_all), ("tau2_eta", self.tau2_eta),
                          ("u_R", self.u_R), ("xi_S", self.xi_S), ("chi_S", self.chi_S)):
            if val <= 0:
                raise ValueError(f"{name} must be positive")
        if np.any(self.alpha < 0) or np.any(self.S <= 0):
            raise ValueError("alpha must be nonnegative and S positive")
        if self.R.size > 1:
            L = logit(self.R)
            # recovering logits from stored proportions is ill-conditioned
            # near 0/1 (absolute error ~ eps * e^|L|), so widen the manifold
            # tolerance by the representation error of the round trip
            tol = CONSTRAINT_TOL + 8.0 * np.finfo(float).eps * float(
                np.sum(np.exp(np.minimum(np.abs(L), 45.0))))
            if abs(float(np.sum(L))) > tol:
                raise ValueError("sum of logit(R) must vanish")
        if viable is not None:
            for j in range(self.eta.shape[1]):
                v = viable[:, j]
                if v.sum() >= 2 and abs(float(self.eta[v, j].sum())) > CONSTRAINT_TOL:
                    raise ValueError(f"eta column {j} violates the sum-zero constraint")
                if np.any(self.eta[~v, j] != 0.0):
                    raise ValueError(f"eta column {j} has entries at non-viable crosses")


class GibbsSampler:
    """Single-chain Gibbs sampler over one dataset.

    Owns the mutable parameter arrays; ``state()`` / ``set_state()`` convert
    to and from immutable snapshots.  ``design=None`` selects the
    exchangeable cross-mean model; passing a CrossDesign switches the mean
    block to constrained allele effects.
    """

    def __init__(self, dataset: Dataset, mask: MissingnessMask, config: PriorConfig,
                 design: CrossDesign | None = None):
        dataset.validate()
        self.dataset = dataset
        self.mask = mask
        self.config = config
        self.design = design
        n, J, G = dataset.n, dataset.J, dataset.G

        self.Y = np.where(np.isnan(dataset.Y), 0.5, dataset.Y).astype(np.float64)
        self.cmask = np.ascontiguousarray(mask.status != STRUCTURAL_MISSING)
        self.imask = np.ascontiguousarray(mask.status == RANDOM_MISSING)
        self.Y[~self.cmask] = np.nan
        self.logY = np.where(self.cmask, np.log(np.where(self.cmask, self.Y, 0.5)), 0.0)
        self.log1mY = np.where(self.cmask, np.log1p(-np.where(self.cmask, self.Y, 0.5)), 0.0)
        self.group = np.ascontiguousarray(dataset.group_of, dtype=np.int64)
        self.viable = np.ascontiguousarray(mask.viable())

        self.P = np.full(n, 0.5)
        self.mu = np.full(G, 0.5)
        self.alpha = np.ones(G)
        self.S = np.ones(J)
        self.Lv = np.zeros(J)
        self.Rv = np.full(J, 0.5)
        self.eta = np.zeros((G, J))
        self.expeta = np.ones((G, J))
        self.hyp = np.array([0.5, 1.0, 1.0, 1.0, 1.0, 1.0])
        cfg = config
        self.pri = np.array([cfg.alpha.shape, cfg.alpha.scale,
                             cfg.hyper_S.shape, cfg.hyper_S.scale,
                             cfg.alpha_all.shape, cfg.alpha_all.scale,
                             cfg.u_R.shape, cfg.u_R.scale, cfg.tau2_df])
        self.d1 = np.zeros(n)
        self.d2 = np.zeros(n)
        self.rowR = np.zeros(J)
        self.rowS = np.zeros(J)
        self.jscr = np.zeros(J)
        self.jscr2 = np.zeros(J)
        self.gscr = np.zeros(G)

        if design is not None:
            self.a = np.zeros(design.K_a)
            self.m = np.zeros(design.K_m)
            self.mfree = np.ascontiguousarray(design.m_free)
            self.dam = np.ascontiguousarray(design.dam, dtype=np.int64)
            self.sire = np.ascontiguousarray(design.sire, dtype=np.int64)
            self.pdam = np.ascontiguousarray(design.po_dam, dtype=np.int64)
            self.psire = np.ascontiguousarray(design.po_sire, dtype=np.int64)
        else:
            self.a = np.zeros(0)
            self.m = np.zeros(0)
            self.mfree = np.zeros(0, dtype=bool)
            self.dam = np.zeros(0, dtype=np.int64)
            self.sire = np.zeros(0, dtype=np.int64)
            self.pdam = np.zeros(0, dtype=np.int64)
            self.psire = np.zeros(0, dtype=np.int64)

        self.stats = np.zeros(4, dtype=np.int64)
        self.st = (self.Y, self.logY, self.log1mY, self.cmask, self.imask,
                   self.group, self.viable, self.P, self.mu, self.alpha,
                   self.S, self.Lv, self.Rv, self.eta, self.expeta,
                   self.hyp, self.pri, self.d1, self.d2, self.rowR, self.rowS,
                   self.jscr, self.jscr2, self.gscr, self.a, self.m,
                   self.mfree, self.dam, self.sire, self.pdam, self.psire,
                   self.stats)

        order = config.update_order
        if order is None:
            order = DEFAULT_ORDER_STRUCTURED if design is not None else DEFAULT_ORDER_EXCHANGEABLE
        unknown = set(order) - set(self._BLOCKS)
        if unknown:
            raise ValueError(f"unknown update blocks: {sorted(unknown)}")
        if design is None and ({"a", "m"} & set(order)):
            raise ValueError("allele-effect blocks require a CrossDesign")
        self.order = tuple(order)

    _BLOCKS = ("mu_all", "alpha_all", "mu", "alpha", "a", "m", "S", "hyper_S",
               "R", "eta", "tau2_eta", "u_R", "P", "impute")

    # -- initialization -----------------------------------------------------

    @staticmethod
    def _pos(rng, shape, scale):
        # prior draw truncated to [1e-3, 1e3]: the weak hyperpriors put most
        # mass below 1e-8, which strands early sweeps in a flat-likelihood trap
        x = 0.0
        while not 1e-3 <= x <= 1e3:
            x = rng.gamma(shape) * scale
        return x

    def init_state(self, rng: np.random.Generator) -> None:
        """Draw overdispersed starting values and fill missing cells."""
        cfg = self.config
        self.P[:] = rng.beta(5.0, 5.0, size=self.P.size)
        self.mu[:] = rng.beta(5.0, 5.0, size=self.mu.size)
        self.S[:] = rng.gamma(10.0, 1.0, size=self.S.size) / 10.0
        for g in range(self.alpha.size):
            self.alpha[g] = self._pos(rng, cfg.alpha.shape, cfg.alpha.scale)
        u = rng.random()
        while not 0.0 < u < 1.0:
            u = rng.random()
        self.hyp[K.H_MU_ALL] = u
        self.hyp[K.H_ALPHA_ALL] = self._pos(rng, cfg.alpha_all.shape, cfg.alpha_all.scale)
        # the S-scale hyperparameters start at the same O(1) scale as S: a
        # prior draw (mostly << 1e-3) would crush S on the first sweep, since
        # S updates before its hyperparameters within a sweep
        self.hyp[K.H_XI_S] = rng.gamma(10.0) / 10.0
        self.hyp[K.H_CHI_S] = rng.gamma(10.0) / 10.0
        self.hyp[K.H_U_R] = self._pos(rng, cfg.u_R.shape, cfg.u_R.scale)
        t2 = 0.0
        while not 1e-3 <= t2 <= 1e3:
            c = rng.chisquare(cfg.tau2_df)
            t2 = 1.0 / c if c > 0.0 else 0.0
        self.hyp[K.H_TAU2] = t2
        self.Lv[:] = 0.0
        self.Rv[:] = 0.5
        self.eta[:] = 0.0
        self.expeta[:] = 1.0
        if self.design is not None:
            self.a[:] = 0.0
            self.m[:] = 0.0
            K.set_mu_from_effects(self.st)
        K.impute_missing(self.st, rng)

    # -- iteration ----------------------------------------------------------

    def _dispatch(self, block: str, rng) -> None:
        cfg = self.config
        args = (self.st, cfg.width, cfg.max_expansions, cfg.max_shrinks, rng)
        if block == "mu_all":
            K.update_mu_all(*args)
        elif block == "alpha_all":
            K.update_alpha_all(*args)
        elif block == "mu":
            K.update_mu(*args)
        elif block == "alpha":
            K.update_alpha(*args)
        elif block == "a":
            K.update_a(*args)
        elif block == "m":
            K.update_m(*args)
        elif block == "S":
            K.update_S(*args)
        elif block == "hyper_S":
            K.update_hyper_S(*args)
        elif block == "R":
            K.update_R(*args)
        elif block == "eta":
            K.update_eta(*args)
        elif block == "tau2_eta":
            K.update_tau2(*args)
        elif block == "u_R":
            K.update_u_r(*args)
        elif block == "P":
            K.update_P(self.st, cfg.width_interval, cfg.max_expansions, cfg.max_shrinks, rng)
        elif block == "impute":
            K.impute_missing(self.st, rng)
        else:  # pragma: no cover - guarded in __init__
            raise ValueError(f"unknown block {block!r}")

    def gibbs_iteration(self, rng: np.random.Generator) -> None:
        """One full sweep over the configured update order."""
        for block in self.order:
            self._dispatch(block, rng)

    # -- snapshots ----------------------------------------------------------

    def state(self) -> ModelState:
        y_imp = np.full(self.Y.shape, np.nan)
        y_imp[self.imask] = self.Y[self.imask]
        return ModelState(
            P=self.P.copy(), mu=self.mu.copy(), alpha=self.alpha.copy(),
            mu_all=float(self.hyp[K.H_MU_ALL]), alpha_all=float(self.hyp[K.H_ALPHA_ALL]),
            S=self.S.copy(), R=self.Rv.copy(), eta=self.eta.copy(),
            tau2_eta=float(self.hyp[K.H_TAU2]), u_R=float(self.hyp[K.H_U_R]),
            xi_S=float(self.hyp[K.H_XI_S]), chi_S=float(self.hyp[K.H_CHI_S]),
            Y_imputed=y_imp, a=self.a.copy(), m=self.m.copy())

    def set_state(self, state: ModelState) -> None:
        state.validate(self.viable)
        self.P[:] = state.P
        self.mu[:] = state.mu
        self.alpha[:] = state.alpha
        self.S[:] = state.S
        self.Rv[:] = state.R
        L = np.log(state.R) - np.log1p(-state.R)
        self.Lv[:] = L - L.mean()
        self.eta[:] = state.eta
        self.expeta[:] = np.exp(state.eta)
        self.hyp[:] = [state.mu_all, state.alpha_all, state.xi_S, state.chi_S,
                       state.u_R, state.tau2_eta]
        if self.a.size:
            self.a[:] = state.a
            self.m[:] = state.m
        imp = ~np.isnan(state.Y_imputed)
        if np.any(imp & ~self.imask):
            raise ValueError("imputed values supplied outside random-missing cells")
        self.Y[imp] = state.Y_imputed[imp]
        self.logY[imp] = np.log(self.Y[imp])
        self.log1mY[imp] = np.log1p(-self.Y[imp])

    # -- posterior transcription (numpy, independent of the kernels) --------

    def log_posterior(self, state: ModelState | None = None) -> float:
        """Unnormalized log posterior of a state, for coherence checking."""
        if state is None:
            state = self.state()
        state.validate(self.viable)
        cfg = self.config
        v = 0.0
        v += log_gamma_density(state.alpha_all, cfg.alpha_all) if self.design is None else 0.0
        if np.all(state.alpha > 0):
            v += float(np.sum(log_gamma_density(state.alpha, cfg.alpha)))
        v += float(np.sum(log_gamma_density(state.S, state.chi_S, state.xi_S)))
        v += log_gamma_density(state.xi_S, cfg.hyper_S)
        v += log_gamma_density(state.chi_S, cfg.hyper_S)
        v += log_gamma_density(state.u_R, cfg.u_R)
        v += log_inv_chi_square(state.tau2_eta, cfg.tau2_df)
        # manifold prior for the reference-bias vector, in natural coordinates
        v += (state.u_R - 1.0) * float(np.sum(np.log(state.R) + np.log1p(-state.R)))
        for j in range(state.eta.shape[1]):
            vb = self.viable[:, j]
            gj = int(vb.sum())
            if gj >= 2:
                v += (-0.5 * (gj - 1) * (math.log(state.tau2_eta) + LOG2PI)
                      - float(np.sum(state.eta[vb, j] ** 2)) / (2.0 * state.tau2_eta))
        if self.design is None:
            # hierarchy over cross means (flat Beta(1,1) on mu_all adds 0)
            v += float(np.sum(latent_log_density(state.mu, state.mu_all, state.alpha_all)))
        v += float(np.sum(latent_log_density(state.P, state.mu[self.group],
                                             self.alpha_broadcast(state))))
        Y = np.where(np.isnan(state.Y_imputed), self.dataset.Y, state.Y_imputed)
        for j in range(state.eta.shape[1]):
            rows = self.cmask[:, j] & ~np.isnan(Y[:, j])
            if not rows.any():
                continue
            g = self.group[rows]
            v += float(np.sum(obs_log_density(Y[rows, j], state.P[rows], state.R[j],
                                              state.S[j], state.eta[g, j])))
        return v

    def alpha_broadcast(self, state: ModelState) -> np.ndarray:
        return state.alpha[self.group]

    # -- flattened draws ----------------------------------------------------

    def param_names(self) -> list[str]:
        names: list[str] = []
        G, J, n = self.dataset.G, self.dataset.J, self.dataset.n
        if self.design is not None:
            names += [f"a[{k}]" for k in range(self.a.size)]
            names += [f"m[{k}]" for k in range(self.m.size)]
        else:
            names += ["mu_all", "alpha_all"]
        names += [f"mu[{g}]" for g in range(G)]
        names += [f"alpha[{g}]" for g in range(G)]
        names += [f"S[{j}]" for j in range(J)]
        names += ["xi_S", "chi_S"]
        names += [f"R[{j}]" for j in range(J)]
        for g in range(G):
            for j in range(J):
                if self.viable[g, j]:
                    names.append(f"eta[{g},{j}]")
        names += ["tau2_eta", "u_R"]
        names += [f"P[{i}]" for i in range(n)]
        if self.config.store_imputed:
            ii, jj = np.nonzero(self.imask)
            names += [f"Y_imp[{i},{j}]" for i, j in zip(ii, jj)]
        return names

    def flatten(self) -> np.ndarray:
        parts = []
        if self.design is not None:
            parts += [self.a, self.m]
        else:
            parts.append(self.hyp[[K.H_MU_ALL, K.H_ALPHA_ALL]])
        parts += [self.mu, self.alpha, self.S,
                  self.hyp[[K.H_XI_S, K.H_CHI_S]], self.Rv,
                  self.eta[self.viable],
                  self.hyp[[K.H_TAU2, K.H_U_R]], self.P]
        if self.config.store_imputed:
            parts.append(self.Y[self.imask])
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])


@dataclass
class SampleStore:
    """Retained draws from one or more chains plus a run manifest."""

    names: list[str]
    chains: list[np.ndarray]      # each (kept, n_params)
    manifest: dict

    def __post_init__(self):
        widths = {c.shape for c in self.chains}
        if len(widths) > 1:
            raise ValueError("all chains must have identical shape")
        if self.chains and self.chains[0].shape[1] != len(self.names):
            raise ValueError("chain width does not match parameter names")

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    def stacked(self) -> np.ndarray:
        return np.stack(self.chains)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"parameter {name!r} not in store") from None

    def series(self, name: str) -> list[np.ndarray]:
        k = self.index(name)
        return [c[:, k] for c in self.chains]

    def pooled(self, name: str) -> np.ndarray:
        return np.concatenate(self.series(name))

    def block(self, prefix: str) -> tuple[list[str], np.ndarray]:
        """All parameters named ``prefix`` or ``prefix[...]``, stacked by chain."""
        idx = [k for k, nm in enumerate(self.names)
               if nm == prefix or nm.startswith(prefix + "[")]
        if not idx:
            raise KeyError(f"no parameters matching {prefix!r}")
        return [self.names[k] for k in idx], self.stacked()[:, :, idx]

    def save(self, outdir) -> list[str]:
        import os
        os.makedirs(outdir, exist_ok=True)
        files = []
        for c, draws in enumerate(self.chains):
            path = os.path.join(outdir, f"chain_{c:02d}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(self.names)
                for row in draws:
                    writer.writerow([repr(float(x)) for x in row])
            files.append(path)
        manifest = dict(self.manifest)
        manifest["chain_files"] = [os.path.basename(f) for f in files]
        with open(os.path.join(outdir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, default=str)
        return files

    @classmethod
    def load(cls, outdir) -> "SampleStore":
        import os
        with open(os.path.join(outdir, "manifest.json")) as fh:
            manifest = json.load(fh)
        chains = []
        names: list[str] = []
        for fname in manifest.get("chain_files", []):
            with open(os.path.join(outdir, fname), newline="") as fh:
                reader = csv.reader(fh)
                names = next(reader)
                rows = [[float(x) for x in row] for row in reader if row]
            chains.append(np.asarray(rows, dtype=float))
        if not chains:
            raise ValueError(f"no chain files listed in {outdir}/manifest.json")
        return cls(names=names, chains=chains, manifest=manifest)


def run_chains(dataset: Dataset, mask: MissingnessMask, config: PriorConfig,
               n_chains: int = 3, design: CrossDesign | None = None) -> SampleStore:
    """Run independent chains sequentially with split seed streams.

    Chain failures are recorded in the manifest and the surviving chains
    returned; if every chain fails the first error is re-raised.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    burn = config.resolved_burn_in()
    kept = (config.iterations - burn + config.thinning - 1) // config.thinning
    seeds = np.random.SeedSequence(config.seed).spawn(n_chains)
    chains: list[np.ndarray] = []
    errors: list[str] = []
    names: list[str] | None = None
    first_exc: BaseException | None = None
    t0 = time.time()
    for c in range(n_chains):
        rng = np.random.default_rng(seeds[c])
        try:
            sampler = GibbsSampler(dataset, mask, config, design=design)
            sampler.init_state(rng)
            if names is None:
                names = sampler.param_names()
            draws = np.empty((kept, len(names)))
            row = 0
            for it in range(config.iterations):
                sampler.gibbs_iteration(rng)
                if it >= burn and (it - burn) % config.thinning == 0:
                    draws[row] = sampler.flatten()
                    row += 1
            chains.append(draws[:row])
        except Exception as exc:
            errors.append(f"chain {c}: {exc}")
            if first_exc is None:
                first_exc = exc
    if not chains:
        raise RuntimeError("all chains failed: " + "; ".join(errors)) from first_exc
    manifest = {
        "model": "structured" if design is not None else "exchangeable",
        "seed": config.seed,
        "n_chains": n_chains,
        "iterations": config.iterations,
        "burn_in": burn,
        "thinning": config.thinning,
        "update_order": list(chains and (config.update_order or (
            DEFAULT_ORDER_STRUCTURED if design is not None else DEFAULT_ORDER_EXCHANGEABLE))),
        "version": _version(),
        "wall_time_s": round(time.time() - t0, 3),
        "chain_errors": errors,
    }
    assert names is not None
    return SampleStore(names=names, chains=chains, manifest=manifest)


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("asebeta")
    except Exception:
        return "unknown"
