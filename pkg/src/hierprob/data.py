"""Panel ingestion, synthetic hierarchical panels, splitting and scaling."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .hierarchy import HierarchySpec, build_summing_matrix

COHERENCE_RTOL = 1e-6


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class SeriesPanel:
    """Observations of every node, ``values[i, t]`` in canonical node order."""

    values: np.ndarray
    timestamps: tuple[str, ...]
    node_ids: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> "SeriesPanel":
        return SeriesPanel(self.values[:, start:stop], self.timestamps[start:stop], self.node_ids)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values.T, columns=list(self.node_ids))
        df.insert(0, "timestamp", list(self.timestamps))
        return df

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")


@dataclass(frozen=True)
class SplitConfig:
    """``history_end`` is the number of conditioning observations (t0 - 1)."""

    history_end: int
    horizon: int
    validation_folds: int = 3

    def check(self, T: int) -> None:
        if self.history_end < 1:
            raise DataError("history must contain at least one observation")
        if self.horizon < 0 or self.history_end + self.horizon > T:
            raise DataError(f"history_end + horizon = {self.history_end + self.horizon} exceeds T = {T}")


def _check_timestamps(ts: pd.Series) -> tuple[str, ...]:
    if ts.isna().any():
        raise DataError(f"missing timestamp at row {int(np.flatnonzero(ts.isna())[0])}")
    if pd.api.types.is_integer_dtype(ts):
        steps = np.diff(ts.to_numpy())
        if len(steps) and (steps[0] <= 0 or np.any(steps != steps[0])):
            bad = int(np.flatnonzero(steps != steps[0])[0]) + 1 if np.any(steps != steps[0]) else 1
            raise DataError(f"missing or unordered timestamp near {ts.iloc[bad]}")
        return tuple(str(v) for v in ts)
    parsed = pd.to_datetime(ts)
    if not parsed.is_monotonic_increasing or parsed.duplicated().any():
        raise DataError("timestamps are not strictly increasing")
    if len(parsed) >= 3 and pd.infer_freq(pd.DatetimeIndex(parsed)) is None:
        raise DataError("timestamps are irregular (missing timestamp?)")
    return tuple(str(v) for v in ts)


def ingest_csv(path: str | Path, spec: HierarchySpec, mode: str = "bottom-only") -> SeriesPanel:
    """Read a ``timestamp,<node>,...`` CSV into a coherent panel.

    In ``bottom-only`` mode only leaf columns are read and the upper series are
    aggregated. In ``all-nodes`` mode every node must be present and the panel
    is checked (not forced) to be coherent.
    """
    if mode not in ("bottom-only", "all-nodes"):
        raise ValueError(f"unknown ingestion mode {mode!r}")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise DataError("no rows") from None
    if len(df) == 0:
        raise DataError("no rows")
    if "timestamp" not in df.columns:
        raise DataError("first column must be 'timestamp'")
    df.columns = [str(c) for c in df.columns]
    unknown = [c for c in df.columns[1:] if c not in spec.nodes]
    if unknown:
        raise DataError(f"unknown node id {unknown[0]!r}")
    timestamps = _check_timestamps(df["timestamp"])
    wanted = spec.bottom_nodes if mode == "bottom-only" else spec.nodes
    missing = [v for v in wanted if v not in df.columns]
    if missing:
        raise DataError(f"missing column for node {missing[0]!r}")
    block = df[list(wanted)].to_numpy(dtype=float)
    if np.isnan(block).any():
        r, c = np.argwhere(np.isnan(block))[0]
        raise DataError(f"missing value for node {wanted[c]!r} at timestamp {timestamps[r]}")
    S = np.asarray(build_summing_matrix(spec), dtype=float)
    if mode == "bottom-only":
        values = S @ block.T
    else:
        values = block.T
        agg = S @ values[spec.n - spec.m:]
        gap = np.abs(values - agg) > COHERENCE_RTOL * np.maximum(1.0, np.abs(agg))
        if gap.any():
            t = int(np.flatnonzero(gap.any(axis=0))[0])
            raise DataError(f"panel is incoherent at timestamp {timestamps[t]}")
    return SeriesPanel(values, timestamps, spec.nodes)


@dataclass
class SyntheticParams:
    """Bottom-level generator settings.

    ``ar_coefs`` is either one coefficient list shared by every bottom node or a
    list with one entry per bottom node; ``level`` likewise.
    """

    ar_coefs: Sequence = (0.6,)
    noise_scale: float = 1.0
    level: float | Sequence[float] = 10.0
    seasonal_period: int | None = None
    seasonal_amplitude: float = 0.0
    burn_in: int = 100


def _per_bottom(value, m: int, name: str) -> list:
    if isinstance(value, (int, float)):
        return [float(value)] * m
    value = list(value)
    if value and isinstance(value[0], (list, tuple, np.ndarray)):
        if len(value) != m:
            raise ValueError(f"{name} has {len(value)} entries for {m} bottom nodes")
        return [list(v) for v in value]
    if name == "level":
        if len(value) != m:
            raise ValueError(f"level has {len(value)} entries for {m} bottom nodes")
        return [float(v) for v in value]
    return [list(value)] * m


def is_stationary(coefs: Sequence[float]) -> bool:
    """True when all roots of 1 - c1 z - ... - cp z^p lie outside the unit circle."""
    coefs = np.asarray(coefs, dtype=float)
    if coefs.size == 0 or not np.any(coefs):
        return True
    # companion eigenvalues are the reciprocal roots
    p = coefs.size
    comp = np.zeros((p, p))
    comp[0] = coefs
    comp[1:, :-1] = np.eye(p - 1)
    return bool(np.max(np.abs(np.linalg.eigvals(comp))) < 1.0)


def generate_synthetic(spec: HierarchySpec, T: int, seed: int, params: SyntheticParams | None = None) -> SeriesPanel:
    """Gaussian AR bottom series (optionally seasonal) aggregated through the tree."""
    params = params or SyntheticParams()
    if T < 20:
        raise ValueError("T must be at least 20")
    m = spec.m
    coefs = _per_bottom(params.ar_coefs, m, "ar_coefs")
    levels = _per_bottom(params.level, m, "level")
    for j, c in enumerate(coefs):
        if not is_stationary(c):
            raise ValueError(f"unstable AR coefficients for bottom node {spec.bottom_nodes[j]!r}: {c}")
    rng = np.random.default_rng(seed)
    burn = params.burn_in
    eps = rng.standard_normal((m, T + burn)) * params.noise_scale
    phases = rng.uniform(0, 2 * np.pi, size=m)
    bottom = np.zeros((m, T))
    for j in range(m):
        c = np.asarray(coefs[j], dtype=float)
        p = c.size
        x = np.zeros(T + burn + p)
        for t in range(p, T + burn + p):
            x[t] = c @ x[t - p:t][::-1] + eps[j, t - p]
        bottom[j] = levels[j] + x[-T:]
    if params.seasonal_period and params.seasonal_amplitude:
        t = np.arange(T)
        bottom += params.seasonal_amplitude * np.sin(
            2 * np.pi * t[None, :] / params.seasonal_period + phases[:, None])
    S = np.asarray(build_summing_matrix(spec), dtype=float)
    return SeriesPanel(S @ bottom, tuple(str(t) for t in range(T)), spec.nodes)


@dataclass(frozen=True)
class ScaleStats:
    scales: np.ndarray  # one divisor per node

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.scales.reshape((-1,) + (1,) * (values.ndim - 1))


def scale_panel(panel: SeriesPanel, split: SplitConfig) -> tuple[SeriesPanel, ScaleStats]:
    """Divide each series by 1 + mean |y| over its conditioning range."""
    if split.history_end < 1:
        raise DataError("history range is empty")
    hist = panel.values[:, :split.history_end]
    scales = 1.0 + np.mean(np.abs(hist), axis=1)
    # all-zero history -> scale 1, which the formula already yields
    scaled = panel.values / scales[:, None]
    return replace(panel, values=scaled), ScaleStats(scales)
