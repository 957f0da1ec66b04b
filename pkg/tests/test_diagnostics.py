import math

import numpy as np
import pytest
from scipy import stats as sps

from asebeta.diagnostics import (autocorrelation, hpd_interval,
                                 pair_order_probability, psrf,
                                 psrf_multivariate, summarize_store,
                                 tail_probability, write_summary_csv)
from asebeta.model import SampleStore


def test_hpd_beta22_matches_central_interval():
    # Beta(2,2) is symmetric, so its HPD equals the equal-tail interval
    rng = np.random.default_rng(0)
    x = rng.beta(2, 2, size=200_000)
    lo, hi = hpd_interval(x, 0.95)
    assert lo == pytest.approx(sps.beta.ppf(0.025, 2, 2), abs=0.01)
    assert hi == pytest.approx(sps.beta.ppf(0.975, 2, 2), abs=0.01)


def test_hpd_exponential_starts_at_zero():
    rng = np.random.default_rng(1)
    x = rng.exponential(size=100_000)
    lo, hi = hpd_interval(x, 0.95)
    assert lo < 0.01
    assert hi == pytest.approx(-math.log(0.05), abs=0.1)


def test_hpd_width_monotone_in_level():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(50_000)
    widths = []
    for level in (0.5, 0.8, 0.9, 0.95, 0.99):
        lo, hi = hpd_interval(x, level)
        widths.append(hi - lo)
    assert all(b > a for a, b in zip(widths, widths[1:]))


def test_hpd_input_validation():
    with pytest.raises(ValueError):
        hpd_interval(np.zeros(5))
    with pytest.raises(ValueError):
        hpd_interval(np.zeros(100), level=1.5)


def test_psrf_hand_computed_fixture():
    chains = np.array([np.linspace(0.0, 1.0, 100),
                       np.linspace(0.5, 1.5, 100)])
    m, n = chains.shape
    means = chains.mean(axis=1)
    W = chains.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    var_plus = (n - 1) / n * W + B / n
    expected = math.sqrt(var_plus / W + B / (n * m * W))
    assert psrf(chains) == pytest.approx(expected, abs=1e-12)


def test_psrf_identical_chains_is_one():
    rng = np.random.default_rng(3)
    base = rng.standard_normal(500)
    assert psrf([base, base.copy()]) == pytest.approx(1.0, abs=0.01)


def test_psrf_detects_displaced_chains():
    rng = np.random.default_rng(4)
    a = rng.standard_normal(500)
    b = rng.standard_normal(500) + 3.0
    assert psrf([a, b]) > 1.5
    assert psrf([a, b], quantile=True) >= psrf([a, b]) * 0.9


def test_psrf_validation():
    with pytest.raises(ValueError):
        psrf([np.zeros(100)])
    with pytest.raises(ValueError):
        psrf([np.zeros(100), np.zeros(99)])
    with pytest.raises(ValueError):
        psrf([np.zeros(10), np.zeros(10)])


def test_psrf_multivariate_bounds_univariate():
    rng = np.random.default_rng(5)
    chains = rng.standard_normal((3, 400, 2))
    chains[1] += [0.8, 0.0]
    multi = psrf_multivariate(chains)
    unis = [psrf(chains[:, :, k]) for k in range(2)]
    assert multi >= max(unis) - 0.05


def test_autocorrelation_ar1():
    rng = np.random.default_rng(6)
    rho = 0.6
    x = np.empty(200_000)
    x[0] = 0.0
    eps = rng.standard_normal(x.size)
    for t in range(1, x.size):
        x[t] = rho * x[t - 1] + eps[t]
    acf = autocorrelation(x, [0, 1, 5])
    assert acf[0] == 1.0
    assert acf[1] == pytest.approx(rho, abs=0.02)
    assert acf[2] == pytest.approx(rho ** 5, abs=0.02)


def test_tail_probability_symmetry_and_floor():
    x = np.array([0.2, 0.4, 0.6, 0.8])
    assert tail_probability(x, 0.5) == 1.0
    y = np.full(1000, 0.9)
    assert tail_probability(y, 0.5) == pytest.approx(2.0 / 1000)


def test_pair_order_probability():
    rng = np.random.default_rng(7)
    a = rng.normal(0.0, 1.0, 2000)
    b = a + rng.normal(5.0, 0.1, 2000)
    assert pair_order_probability(a, b) == pytest.approx(2.0 / 2000)
    assert pair_order_probability(a, a + rng.normal(0, 1, 2000)) > 0.5
    with pytest.raises(ValueError):
        pair_order_probability(a, a[:-1])


def test_summarize_store_and_csv(tmp_path):
    rng = np.random.default_rng(8)
    names = ["x", "y"]
    chains = [rng.standard_normal((300, 2)) for _ in range(2)]
    store = SampleStore(names=names, chains=chains, manifest={})
    summary = summarize_store(store)
    assert summary.names == names
    assert np.all(np.isfinite(summary.psrf))
    assert summary.psrf.max() < 1.1
    assert "max_univariate_psrf" in summary.extras
    text = summary.to_text()
    assert "psrf" in text and "x" in text
    out = tmp_path / "s.csv"
    write_summary_csv(summary, out)
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 3 and lines[0].startswith("parameter,")
