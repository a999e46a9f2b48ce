"""CRPS scoring, per-level aggregation and multiple comparisons with the best."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .arrange import SampleForecast
from .hierarchy import HierarchySpec

_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


def crps_empirical(samples, y) -> np.ndarray | float:
    """Energy-form CRPS of an ensemble: E|X - y| - 0.5 E|X - X'|.

    The pair term averages over all N^2 ordered pairs, which makes the score
    the exact CRPS of the empirical CDF. ``samples`` may carry leading batch
    axes; the ensemble is the last axis and ``y`` broadcasts against the rest.
    """
    x = np.asarray(samples, dtype=float)
    N = x.shape[-1]
    if N < 2:
        raise ValueError("CRPS needs at least two samples")
    y = np.asarray(y, dtype=float)
    spread = np.mean(np.abs(x - y[..., None]), axis=-1)
    xs = np.sort(x, axis=-1)
    weights = 2 * np.arange(1, N + 1) - N - 1
    pair = 2.0 * (xs @ weights) / N ** 2
    out = np.maximum(spread - 0.5 * pair, 0.0)
    return float(out) if out.ndim == 0 else out


def crps_gaussian(mu, sigma, y):
    mu, sigma, y = (np.asarray(a, dtype=float) for a in (mu, sigma, y))
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    z = (y - mu) / sigma
    out = sigma * (z * (2 * stats.norm.cdf(z) - 1) + 2 * stats.norm.pdf(z) - _INV_SQRT_PI)
    return float(out) if out.ndim == 0 else out


def crps_quadrature(samples, y: float, grid_points: int = 200_001) -> float:
    """Integrate (F(x) - 1{x >= y})^2 over a bounded grid. Slow; for checking only."""
    x = np.sort(np.asarray(samples, dtype=float))
    lo, hi = min(x[0], y), max(x[-1], y)
    pad = 1e-9 + 1e-6 * (hi - lo)
    grid = np.linspace(lo - pad, hi + pad, grid_points)
    F = np.searchsorted(x, grid, side="right") / x.size
    H = (grid >= y).astype(float)
    return float(np.trapezoid((F - H) ** 2, grid))


@dataclass(frozen=True)
class EvalReport:
    crps: np.ndarray  # (n, h)
    node_ids: tuple[str, ...]
    levels: tuple[int, ...]
    level_means: dict[int, float]
    overall_mean: float
    method: str = ""

    @property
    def node_crps(self) -> np.ndarray:
        return self.crps.mean(axis=1)

    def rows(self) -> list[dict]:
        return [{"node": v, "level": lv, "method": self.method, "crps": float(c)}
                for v, lv, c in zip(self.node_ids, self.levels, self.node_crps)]


def evaluate(forecast: SampleForecast, actuals, hierarchy: HierarchySpec, method: str = "") -> EvalReport:
    """Score joint draws against ``actuals`` of shape ``(n, h)``."""
    actuals = np.asarray(actuals, dtype=float)
    h, n, _ = forecast.samples.shape
    if actuals.shape != (n, h):
        raise ValueError(f"actuals of shape {actuals.shape} do not align with forecast ({n}, {h})")
    if tuple(forecast.node_ids) != tuple(hierarchy.nodes):
        raise ValueError("forecast rows are not in the hierarchy's node order")
    scores = crps_empirical(np.transpose(forecast.samples, (1, 0, 2)), actuals)
    scores = np.asarray(scores).reshape(n, h)
    per_node = scores.mean(axis=1) if h else np.zeros(n)
    levels = hierarchy.levels
    level_means = {lv: float(np.mean(per_node[[i for i, l in enumerate(levels) if l == lv]]))
                   for lv in sorted(set(levels))}
    return EvalReport(scores, tuple(hierarchy.nodes), levels, level_means, float(per_node.mean()), method)


@dataclass(frozen=True)
class McbResult:
    methods: tuple[str, ...]
    average_rank: np.ndarray
    half_width: float
    overlap: np.ndarray  # boolean k x k; False means significantly different

    @property
    def lower(self) -> np.ndarray:
        return self.average_rank - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.average_rank + self.half_width

    def rows(self) -> list[dict]:
        return [{"method": m, "average_rank": float(r), "lower": float(r - self.half_width),
                 "upper": float(r + self.half_width)}
                for m, r in zip(self.methods, self.average_rank)]


def mcb_critical_constant(k: int, confidence: float = 0.95) -> float:
    """Half the studentized-range quantile for k means and infinite dof.

    With this constant two intervals are disjoint exactly when the gap in
    average ranks exceeds the Nemenyi critical difference.
    """
    return float(stats.studentized_range.ppf(confidence, k, np.inf)) / 2.0


def mcb(score_table, methods: Sequence[str] | None = None, confidence: float = 0.95,
        critical_constant: float | None = None) -> McbResult:
    """Average ranks (ties averaged) and intervals for a methods x instances table."""
    table = np.asarray(score_table, dtype=float)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
        raise ValueError("need at least two methods and two instances")
    k, n_inst = table.shape
    methods = tuple(methods) if methods is not None else tuple(f"m{i}" for i in range(k))
    if len(methods) != k:
        raise ValueError("method labels do not match table rows")
    ranks = stats.rankdata(table, axis=0, method="average")
    avg = ranks.mean(axis=1)
    q = mcb_critical_constant(k, confidence) if critical_constant is None else critical_constant
    half = q * np.sqrt(k * (k + 1) / (12.0 * n_inst))
    lo, hi = avg - half, avg + half
    overlap = (lo[:, None] <= hi[None, :]) & (lo[None, :] <= hi[:, None])
    return McbResult(methods, avg, float(half), overlap)
