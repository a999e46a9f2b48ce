import numpy as np
import pytest

from hierprob.baselines import ar_psi_weights, fit, forecast_gaussian


def ar1_series(phi, T, seed, c=0.0):
    rng = np.random.default_rng(seed)
    y = np.zeros(T + 200)
    eps = rng.standard_normal(T + 200)
    for t in range(1, T + 200):
        y[t] = c + phi * y[t - 1] + eps[t]
    return y[200:]


def test_constant_series_ar():
    f = fit(np.full(30, 7.0), "ar", 1)
    assert f.kind == "ar"
    assert f.params["intercept"] == pytest.approx(7.0)
    assert f.params["coefs"][0] == pytest.approx(0.0, abs=1e-12)
    assert f.sigma2 == pytest.approx(0.0, abs=1e-20)


def test_ar1_consistency():
    f = fit(ar1_series(0.8, 500, 1), "ar", 1)
    assert abs(f.params["coefs"][0] - 0.8) < 0.1


def test_too_short():
    with pytest.raises(ValueError, match="too short"):
        fit(np.arange(3.0), "ar", 4)
    with pytest.raises(ValueError):
        fit(np.arange(5.0), "ses")


def test_ses_constant():
    g = forecast_gaussian(fit(np.full(20, 3.0), "ses"), 5)
    np.testing.assert_allclose(g.mu, 3.0)
    np.testing.assert_allclose(g.sigma, 1e-9)


def test_zero_horizon():
    g = forecast_gaussian(fit(np.arange(20.0), "holt"), 0)
    assert g.mu.size == 0 and g.sigma.size == 0


def test_holt_on_line():
    f = fit(2.0 + 0.5 * np.arange(40), "holt")
    g = forecast_gaussian(f, 3)
    np.testing.assert_allclose(g.mu, 2.0 + 0.5 * np.arange(40, 43), atol=1e-8)


def test_nonstationary_ar_falls_back_to_ses():
    y = np.cumsum(np.r_[0.0, np.ones(49)]) ** 1.5
    f = fit(y, "ar", 2)
    assert f.kind == "ses"
    assert "fell back" in f.fit_report[0]


def test_psi_weights_closed_form():
    np.testing.assert_allclose(ar_psi_weights([0.5], 4), [1, 0.5, 0.25, 0.125])
    # AR(2): psi_2 = phi1^2 + phi2
    np.testing.assert_allclose(ar_psi_weights([0.5, 0.2], 3), [1, 0.5, 0.45])


def test_ar_variance_matches_simulation():
    phi, s2, h = 0.7, 2.0, 6
    y = ar1_series(phi, 400, 7)
    f = fit(y, "ar", 1)
    # override the fitted parameters so the simulation oracle is exact
    f = type(f)("ar", {"intercept": 0.3, "coefs": [phi]}, s2, {"last": [1.5]})
    g = forecast_gaussian(f, h)
    closed = s2 * np.cumsum(phi ** (2 * np.arange(h)))
    np.testing.assert_allclose(g.sigma ** 2, closed, rtol=1e-12)
    rng = np.random.default_rng(0)
    paths = np.empty((100_000, h))
    prev = np.full(100_000, 1.5)
    for k in range(h):
        prev = 0.3 + phi * prev + np.sqrt(s2) * rng.standard_normal(100_000)
        paths[:, k] = prev
    np.testing.assert_allclose(paths.var(axis=0), closed, rtol=0.02)
    assert np.all(np.abs(paths.mean(axis=0) - g.mu) < 4 * np.sqrt(closed / 1e5))


@pytest.mark.parametrize("kind", ["ar", "ses", "holt"])
def test_variance_non_decreasing(kind):
    f = fit(ar1_series(0.5, 200, 3, c=5.0), kind, 4)
    s = forecast_gaussian(f, 12).sigma
    assert np.all(np.diff(s) >= -1e-12)


def test_gaussian_draws_reproduce_moments():
    f = fit(ar1_series(0.5, 200, 4), "ar", 2)
    g = forecast_gaussian(f, 3)
    draws = g.mu + g.sigma * np.random.default_rng(1).standard_normal((100_000, 3))
    se = g.sigma / np.sqrt(1e5)
    assert np.all(np.abs(draws.mean(axis=0) - g.mu) < 3 * se)
    # sd of the sample sd is about sigma / sqrt(2N)
    assert np.all(np.abs(draws.std(axis=0) - g.sigma) < 3 * g.sigma / np.sqrt(2e5))
