import numpy as np
import pytest
from scipy import integrate, stats as sps

from asebeta.dists import (BetaShiftParams, GammaShapeScale, inv_logit,
                           latent_log_density, log_beta_shifted,
                           log_gamma_density, log_inv_chi_square, log_sigmoid,
                           logit, obs_log_density)


def test_log_beta_shifted_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.uniform(0.01, 0.99)
        A = rng.uniform(0.0, 40.0)
        B = rng.uniform(0.0, 40.0)
        assert log_beta_shifted(x, A, B) == pytest.approx(
            sps.beta.logpdf(x, A + 1.0, B + 1.0), abs=1e-10)


def test_log_beta_shifted_zero_shape_is_uniform():
    assert log_beta_shifted(0.37, 0.0, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_obs_log_density_matches_direct_beta():
    rng = np.random.default_rng(1)
    for _ in range(30):
        y = rng.uniform(0.01, 0.99)
        p = rng.uniform(0.05, 0.95)
        r = rng.uniform(0.1, 0.9)
        s = rng.uniform(1.0, 300.0)
        eta = rng.normal(0, 0.5)
        w = s * np.exp(eta)
        ref = sps.beta.logpdf(y, p * r * w + 1.0, (1.0 - p) * (1.0 - r) * w + 1.0)
        assert obs_log_density(y, p, r, s, eta) == pytest.approx(ref, abs=1e-9)


def test_latent_log_density_normalizes():
    for mu, alpha in [(0.25, 50.0), (0.7, 3.0), (0.5, 0.2)]:
        val, _ = integrate.quad(lambda p: np.exp(latent_log_density(p, mu, alpha)),
                                0.0, 1.0)
        assert val == pytest.approx(1.0, rel=1e-8)


def test_log_gamma_density_matches_scipy():
    rng = np.random.default_rng(2)
    for _ in range(30):
        x = rng.uniform(0.01, 20.0)
        shape = rng.uniform(0.05, 5.0)
        scale = rng.uniform(0.1, 10.0)
        ref = sps.gamma.logpdf(x, shape, scale=scale)
        assert log_gamma_density(x, shape, scale) == pytest.approx(ref, abs=1e-10)
        assert log_gamma_density(x, GammaShapeScale(shape, scale)) == \
            pytest.approx(ref, abs=1e-10)


def test_log_inv_chi_square_matches_invgamma():
    for x in (0.05, 0.5, 3.0):
        for df in (1.0, 2.0, 7.0):
            ref = sps.invgamma.logpdf(x, df / 2.0, scale=0.5)
            assert log_inv_chi_square(x, df) == pytest.approx(ref, abs=1e-10)


def test_logit_round_trip():
    x = np.array([1e-6, 0.3, 0.5, 0.9, 1 - 1e-6])
    assert np.allclose(inv_logit(logit(x)), x, atol=1e-12)


def test_log_sigmoid_extreme_arguments():
    assert log_sigmoid(1000.0) == pytest.approx(0.0, abs=1e-12)
    assert log_sigmoid(-1000.0) == pytest.approx(-1000.0, rel=1e-12)
    assert np.isfinite(log_sigmoid(np.array([-700.0, 0.0, 700.0]))).all()


def test_parameter_containers_validate():
    with pytest.raises(ValueError):
        GammaShapeScale(-1.0, 1.0)
    with pytest.raises(ValueError):
        GammaShapeScale(1.0, 0.0)
    with pytest.raises(ValueError):
        BetaShiftParams(-0.1, 2.0)
