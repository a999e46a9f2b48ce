"""Univariate Gaussian base forecasters: AR(p), simple and Holt exponential smoothing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import is_stationary

SIGMA_FLOOR = 1e-9
KINDS = ("ar", "ses", "holt")


@dataclass(frozen=True)
class BaseForecaster:
    kind: str
    params: dict
    sigma2: float
    state: dict
    fit_report: list[str] = field(default_factory=list)


def _ar_fit(y: np.ndarray, p: int) -> tuple[dict, float, dict]:
    mean = y.mean()
    z = y - mean
    X = np.column_stack([np.ones(len(z) - p)] + [z[p - k:len(z) - k] for k in range(1, p + 1)])
    target = z[p:]
    beta, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ beta
    dof = max(len(target) - p - 1, 1)
    sigma2 = float(resid @ resid / dof)
    coefs = beta[1:]
    intercept = mean * (1 - coefs.sum()) + beta[0]
    return {"intercept": float(intercept), "coefs": coefs.tolist()}, sigma2, {"last": y[len(y) - p:].tolist()}


def _smoothing_grid(y: np.ndarray, alphas: np.ndarray, betas: np.ndarray | None):
    """Run SES (betas None) or Holt over every grid point at once; return SSE and final states."""
    if betas is None:
        a = alphas
        level = np.full_like(a, y[0])
        sse = np.zeros_like(a)
        for t in range(1, len(y)):
            err = y[t] - level
            sse += err ** 2
            level = level + a * err
        return sse, level, None
    A, B = np.meshgrid(alphas, betas, indexing="ij")
    a, b = A.ravel(), B.ravel()
    level = np.full_like(a, y[1])
    trend = np.full_like(a, y[1] - y[0])
    sse = np.zeros_like(a)
    for t in range(2, len(y)):
        err = y[t] - (level + trend)
        sse += err ** 2
        new_level = level + trend + a * err
        trend = b * (new_level - level) + (1 - b) * trend
        level = new_level
    return sse, (level, trend), (a, b)


def fit(series, kind: str = "ar", order: int = 4) -> BaseForecaster:
    """Fit a base forecaster to one series.

    AR(p) is least squares on the demeaned lag regression; SES and Holt pick
    their smoothing weights by grid search on in-sample one-step squared error.
    A non-stationary AR fit falls back to SES and says so in ``fit_report``.
    """
    y = np.asarray(series, dtype=float)
    if kind not in KINDS:
        raise ValueError(f"unknown forecaster kind {kind!r}")
    need = max(order + 2, 10) if kind == "ar" else 10
    if len(y) < need:
        raise ValueError(f"series of length {len(y)} is too short (need {need})")
    if kind == "ar":
        params, sigma2, state = _ar_fit(y, order)
        if is_stationary(params["coefs"]):
            return BaseForecaster("ar", params, sigma2, state)
        fallback = fit(y, "ses")
        return BaseForecaster("ses", fallback.params, fallback.sigma2, fallback.state,
                              [f"AR({order}) fit non-stationary, fell back to SES"])
    alphas = np.round(np.arange(0.01, 1.0, 0.01), 2)
    if kind == "ses":
        sse, level, _ = _smoothing_grid(y, alphas, None)
        i = int(np.argmin(sse))
        return BaseForecaster("ses", {"alpha": float(alphas[i])}, float(sse[i] / (len(y) - 1)),
                              {"level": float(level[i])})
    grid = np.round(np.arange(0.05, 1.0, 0.05), 2)
    sse, (level, trend), (a, b) = _smoothing_grid(y, grid, grid)
    i = int(np.argmin(sse))
    return BaseForecaster("holt", {"alpha": float(a[i]), "beta": float(b[i])}, float(sse[i] / (len(y) - 2)),
                          {"level": float(level[i]), "trend": float(trend[i])})


@dataclass(frozen=True)
class Gaussian1D:
    mu: np.ndarray
    sigma: np.ndarray


def ar_psi_weights(coefs, h: int) -> np.ndarray:
    """MA(infinity) weights psi_0..psi_{h-1} of an AR recursion."""
    coefs = np.asarray(coefs, dtype=float)
    psi = np.zeros(h)
    if h:
        psi[0] = 1.0
    for j in range(1, h):
        k = min(j, coefs.size)
        psi[j] = coefs[:k] @ psi[j - 1::-1][:k] if k else 0.0
    return psi


def forecast_gaussian(f: BaseForecaster, h: int) -> Gaussian1D:
    if h <= 0:
        return Gaussian1D(np.zeros(0), np.zeros(0))
    steps = np.arange(h)
    if f.kind == "ar":
        coefs = np.asarray(f.params["coefs"])
        p = coefs.size
        hist = list(f.state["last"])
        mu = np.empty(h)
        for i in range(h):
            mu[i] = f.params["intercept"] + coefs @ np.asarray(hist[-p:][::-1])
            hist.append(mu[i])
        var = f.sigma2 * np.cumsum(ar_psi_weights(coefs, h) ** 2)
    elif f.kind == "ses":
        mu = np.full(h, f.state["level"])
        var = f.sigma2 * (1 + steps * f.params["alpha"] ** 2)
    else:
        a, b = f.params["alpha"], f.params["beta"]
        mu = f.state["level"] + (steps + 1) * f.state["trend"]
        c = a + a * b * np.arange(1, h)
        var = f.sigma2 * (1 + np.concatenate([[0.0], np.cumsum(c ** 2)]))
    return Gaussian1D(mu, np.maximum(np.sqrt(var), SIGMA_FLOOR))
