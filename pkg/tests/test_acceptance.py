"""End-to-end acceptance gate.

Each test prints one PASS/FAIL line for its criterion.  The replication
studies are session-scoped fixtures shared between criteria; the whole
module is several hours of sequential compute on one core.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats as sps
from scipy.special import expit

import asebeta
from asebeta.cli import main
from asebeta.diagnostics import autocorrelation, psrf
from asebeta.model import PriorConfig, SampleStore, run_chains
from asebeta.simulate import (SimulationTruth, load_truth_config,
                              replication_study, simulate_beta_dataset)
from asebeta.slicer import (Constraint, ConstrainedVector, SliceConfig,
                            slice_logit_manifold, slice_sum_zero_direction,
                            slice_univariate)

import test_model
import test_slicer
import test_wbc

PRESETS = Path(asebeta.__file__).parent / "presets"
N_REPS = 100


def _criterion(capsys, cid, ok, detail):
    with capsys.disabled():
        print(f"\n[{cid}] {'PASS' if ok else 'FAIL'} - {detail}", flush=True)
    assert ok, f"{cid} failed: {detail}"


def _coverage_bounds(p_lo, p_hi, n=N_REPS, conf=0.99):
    tail = (1.0 - conf) / 2.0
    return (sps.binom.ppf(tail, n, p_lo) / n,
            sps.binom.ppf(1.0 - tail, n, p_hi) / n)


def _r3(x):
    return np.round(np.asarray(x, dtype=float), 3).tolist()


# ---------------------------------------------------------------- studies

@pytest.fixture(scope="session")
def beta_study():
    truth, _ = load_truth_config(PRESETS / "paper_s4.json")
    return replication_study(truth, N_REPS,
                             estimators=("bayes", "mean", "bootstrap"),
                             seed=20260823, fit_config=PriorConfig(iterations=2000),
                             pop_n_sim=5000, bootstrap_B=1000, order_pair=(1, 2))


@pytest.fixture(scope="session")
def lmm_study():
    truth, _ = load_truth_config(PRESETS / "paper_s4_lmm.json")
    return replication_study(truth, N_REPS, estimators=("bayes", "bootstrap"),
                             seed=20260824, fit_config=PriorConfig(iterations=2000),
                             pop_n_sim=5000, bootstrap_B=1000)


def _wbc_study(preset, seed, iterations, pin_m):
    truth, _ = load_truth_config(PRESETS / preset, seed)
    return replication_study(truth, N_REPS, estimators=("bayes",), seed=seed,
                             fit_config=PriorConfig(iterations=iterations),
                             design=None, pin_m=pin_m)


@pytest.fixture(scope="session")
def wbc8_free_study():
    return _wbc_study("paper_s4_wbc8.json", 20260825, 4000, pin_m=False)


@pytest.fixture(scope="session")
def wbc8_pinned_study():
    return _wbc_study("paper_s4_wbc8.json", 20260826, 2500, pin_m=True)


@pytest.fixture(scope="session")
def wbc16_study():
    return _wbc_study("paper_s4_wbc16.json", 20260827, 2500, pin_m=False)


# ------------------------------------------------------------- criteria

def test_c1_constrained_sampler_properties(capsys):
    t0 = time.time()
    rng = np.random.default_rng(101)
    cfg = SliceConfig(width=1.0)

    v = ConstrainedVector(np.zeros(5), Constraint.SUM_ZERO)
    worst_sum = 0.0
    for _ in range(10_000):
        v = slice_sum_zero_direction(lambda x: -0.5 * float(x @ x), v,
                                     rng.integers(5), cfg, rng)
        worst_sum = max(worst_sum, abs(v.residual()))

    R = ConstrainedVector(np.full(4, 0.5), Constraint.SUM_LOGIT_ZERO)
    worst_logit = 0.0
    for _ in range(10_000):
        R = slice_logit_manifold(
            lambda r: 0.5 * float(np.sum(np.log(r) + np.log1p(-r))),
            R, rng.integers(4), cfg, rng)
        worst_logit = max(worst_logit, abs(R.residual()))

    m = 4
    vv = ConstrainedVector(np.zeros(m), Constraint.SUM_ZERO)
    draws = []
    for it in range(6000):
        for g in range(m):
            vv = slice_sum_zero_direction(lambda x: -0.5 * float(x @ x),
                                          vv, g, cfg, rng)
        if it >= 500:
            draws.append(vv.values.copy())
    var = np.asarray(draws).var(axis=0, ddof=1)
    target = (m - 1) / m
    var_err = float(np.max(np.abs(var - target))) / target

    tv_good = test_slicer._manifold_tv(
        test_slicer._run_logit_manifold(0.6, 8, include_jacobian=True), 0.6)
    tv_bad = test_slicer._manifold_tv(
        test_slicer._run_logit_manifold(2.0, 9, include_jacobian=False), 2.0)

    elapsed = time.time() - t0
    ok = (worst_sum < 1e-9 and worst_logit < 1e-9 and var_err < 0.05
          and tv_good < 0.05 and tv_bad > 0.15 and elapsed < 120)
    _criterion(capsys, "C1", ok,
               f"residuals {worst_sum:.1e}/{worst_logit:.1e}, "
               f"projected-variance rel err {var_err:.3f}, "
               f"manifold TV {tv_good:.3f} (control {tv_bad:.3f}), {elapsed:.0f}s")


def test_c2_univariate_slice_distributions(capsys):
    t0 = time.time()
    cases = [
        ("beta(3,5)", lambda x: 2.0 * math.log(x) + 4.0 * math.log1p(-x),
         0.4, SliceConfig(width=0.3, lower=0.0, upper=1.0), sps.beta(3, 5).cdf),
        ("gamma(3,2)", lambda x: 2.0 * math.log(x) - 0.5 * x,
         5.0, SliceConfig(width=2.0, lower=0.0), sps.gamma(3, scale=2).cdf),
        ("normal", lambda x: -0.5 * x * x, 0.0, SliceConfig(width=1.0),
         sps.norm.cdf),
    ]
    pvals = {}
    for k, (name, log_f, x0, cfg, cdf) in enumerate(cases):
        rng = np.random.default_rng(200 + k)
        x = x0
        out = np.empty(50_000)
        for _ in range(200):
            x = slice_univariate(log_f, x, cfg, rng)
        for i in range(out.size):
            for _ in range(3):
                x = slice_univariate(log_f, x, cfg, rng)
            out[i] = x
        pvals[name] = sps.kstest(out, cdf).pvalue
    elapsed = time.time() - t0
    ok = all(p > 0.001 for p in pvals.values()) and elapsed < 60
    _criterion(capsys, "C2", ok,
               "KS p-values " + ", ".join(f"{k}={v:.3g}" for k, v in pvals.items())
               + f", {elapsed:.0f}s")


def test_c3_cross_mean_replication_metrics(capsys, beta_study):
    bayes = beta_study.metrics("mu", "bayes")
    mean = beta_study.metrics("mu", "mean")
    lo, hi = _coverage_bounds(0.96, 0.97)
    cov_ok = bool(np.all((bayes["coverage"] >= lo) & (bayes["coverage"] <= hi)))
    width_ok = bool(np.all(np.abs(bayes["width"] - 0.06) <= 0.015))
    bias_ok = bool(np.all(np.abs(bayes["bias"]) < 0.01))
    naive_ok = float(mean["coverage"][0]) < 0.80
    ok = cov_ok and width_ok and bias_ok and naive_ok
    _criterion(capsys, "C3", ok,
               f"coverage {_r3(bayes['coverage'])} in [{lo:.3f},{hi:.3f}], "
               f"widths {_r3(bayes['width'])}, |bias| {_r3(np.abs(bayes['bias']))}, "
               f"sample-mean coverage at 0.25: {mean['coverage'][0]:.3f}")


def test_c4_population_mean_coverage(capsys, beta_study, lmm_study):
    beta_pop = beta_study.metrics("pop", "bayes")["coverage"]
    lmm_pop = lmm_study.metrics("pop", "bayes")["coverage"]
    boot_pop = beta_study.metrics("pop", "bootstrap")["coverage"]
    b_lo, b_hi = _coverage_bounds(0.92, 0.955)
    ok = (bool(np.all(beta_pop >= 0.93)) and bool(np.all(lmm_pop >= 0.93))
          and bool(np.all((boot_pop >= b_lo) & (boot_pop <= b_hi))))
    _criterion(capsys, "C4", ok,
               f"Bayes coverage beta {_r3(beta_pop)}, lmm {_r3(lmm_pop)} (>=0.93); "
               f"bootstrap {_r3(boot_pop)} in [{b_lo:.3f},{b_hi:.3f}]")


def test_c5_allele_effect_identifiability(capsys, wbc8_free_study,
                                          wbc8_pinned_study, wbc16_study):
    lo, hi = _coverage_bounds(0.95, 1.0)
    parts, ok = [], True
    for label, study, target in (("8-cross free", wbc8_free_study, 0.612),
                                 ("8-cross pinned", wbc8_pinned_study, 0.172),
                                 ("16-cross free", wbc16_study, 0.120)):
        m = study.metrics("a", "bayes")
        w_ok = bool(np.all(np.abs(m["width"] - target) <= 0.25 * target))
        c_ok = bool(np.all((m["coverage"] >= lo) & (m["coverage"] <= hi)))
        ok = ok and w_ok and c_ok
        parts.append(f"{label}: widths {_r3(m['width'])} (target {target}+-25%), "
                     f"coverage {_r3(m['coverage'])}")
    _criterion(capsys, "C5", ok, "; ".join(parts) + f"; coverage bounds [{lo:.3f},{hi:.3f}]")


def test_c6_order_test_power(capsys, beta_study):
    power = beta_study.power
    ok = power is not None and 0.45 <= power <= 0.75
    _criterion(capsys, "C6", ok, f"rejection rate {power:.3f} (expected 0.60 +- 0.15)")


def test_c7_convergence_diagnostics(capsys, tmp_path):
    truth, _ = load_truth_config(PRESETS / "paper_s4.json")
    data_csv = str(tmp_path / "sim.csv")
    assert main(["simulate", "--truth", str(PRESETS / "paper_s4.json"),
                 "--seed", "41", "--out", data_csv]) == 0
    fit_dir = str(tmp_path / "fit")
    assert main(["fit", "--data", data_csv, "--model", "ia", "--chains", "3",
                 "--iters", "7500", "--seed", "42", "--out", fit_dir]) == 0
    store = SampleStore.load(fit_dir)
    rhats = [psrf(store.series(f"mu[{g}]")) for g in range(truth.G)]
    acf5 = [float(autocorrelation(store.pooled(f"mu[{g}]"), [5])[0])
            for g in range(truth.G)]
    diag_csv = str(tmp_path / "diag.csv")
    assert main(["diagnose", "--chains", fit_dir, "--out", diag_csv]) == 0
    with open(Path(fit_dir) / "summary.csv", "rb") as a, open(diag_csv, "rb") as b:
        summaries_match = a.read() == b.read()

    # pipeline check at the scale of a dense real design: 32 crosses, sparse
    # observations (nominal 84.9% missing), full fit must converge
    J = 6
    mimic = SimulationTruth(
        kind="beta", mu_true=np.linspace(0.12, 0.88, 32),
        alpha_true=np.full(32, 50.0),
        S_true=np.array([200.0, 200.0, 100.0, 100.0, 50.0, 50.0]),
        R_true=expit(np.array([-3.0, -2.0, -1.0, 0.0, 1.0, 5.0]) / 8.0),
        eta_true=np.zeros((32, J)), group_sizes=[10] * 32,
        missing_fraction=0.849)
    mdata, mmask = simulate_beta_dataset(mimic, np.random.SeedSequence(43))
    mstore = run_chains(mdata, mmask, PriorConfig(iterations=3000, seed=44),
                        n_chains=3)
    mimic_rhat = max(psrf(mstore.series(f"mu[{g}]")) for g in range(32))

    ok = (max(rhats) <= 1.15 and all(np.isfinite(acf5)) and summaries_match
          and mimic_rhat <= 1.15)
    _criterion(capsys, "C7", ok,
               f"max PSRF {max(rhats):.3f}, lag-5 autocorr finite "
               f"{all(np.isfinite(acf5))}, diagnose==fit-summary {summaries_match}, "
               f"sparse 32-cross run PSRF {mimic_rhat:.3f}")


def test_c8_coherence_suites(capsys):
    test_model.test_scalar_conditionals_cohere_with_joint()
    test_model.test_eta_direction_coheres_with_joint()
    test_model.test_bias_direction_coheres_with_joint()
    test_model.test_allele_effect_directions_cohere_with_joint()
    test_model.test_joint_consistency_successive_conditionals()
    test_model.test_run_chains_determinism()
    test_wbc.test_reciprocal_identity_exact_without_po_effects()
    _criterion(capsys, "C8", True,
               "conditional/joint coherence at 1e-8, successive-conditional "
               "simulation within 3 MC SEs, deterministic reruns, exact "
               "reciprocal cross-mean identity")
