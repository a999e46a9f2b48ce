"""Linear reconciliation maps P (BU, TD, MinT) and their application S P y."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .arrange import SampleForecast
from .data import SeriesPanel


@dataclass(frozen=True)
class ReconciliationMap:
    P: np.ndarray  # m x n
    method: str
    covariance_assumption: str | None = None

    @property
    def label(self) -> str:
        return f"{self.method}-{self.covariance_assumption or 'none'}"


def build_bu(S) -> ReconciliationMap:
    S = np.asarray(S)
    n, m = S.shape
    P = np.zeros((m, n))
    P[:, n - m:] = np.eye(m)
    return ReconciliationMap(P, "bu")


def build_td(S, panel: SeriesPanel, history_end: int | None = None) -> ReconciliationMap:
    """Average historical proportions of each bottom series to the root."""
    S = np.asarray(S)
    n, m = S.shape
    hist = panel.values[:, :history_end]
    root = hist[0]
    if np.any(root <= 0):
        t = int(np.flatnonzero(root <= 0)[0])
        raise ValueError(f"root series is not strictly positive at history step {t}; proportions undefined")
    props = np.mean(hist[n - m:] / root, axis=1)
    if np.any(props < 0):
        raise ValueError("negative average proportion; top-down needs non-negative bottom series")
    P = np.zeros((m, n))
    P[:, 0] = props / props.sum()
    return ReconciliationMap(P, "td")


def build_mint(S, assumption: str = "struct") -> ReconciliationMap:
    """P = (S' W^-1 S)^-1 S' W^-1 with W = diag(S 1) (struct) or W = I (ols).

    The scale factor k_h cancels and is omitted.
    """
    S = np.asarray(S, dtype=float)
    if assumption == "struct":
        w = S.sum(axis=1)
    elif assumption in ("ols", "ols-identity"):
        w = np.ones(S.shape[0])
        assumption = "ols"
    else:
        raise ValueError(f"unknown covariance assumption {assumption!r}")
    StWinv = S.T / w
    normal = StWinv @ S
    try:
        P = np.linalg.solve(normal, StWinv)
    except np.linalg.LinAlgError:
        raise ValueError("singular normal matrix; the summing matrix is malformed") from None
    return ReconciliationMap(P, "mint", assumption)


def _check(rmap: ReconciliationMap, S: np.ndarray, rows: int) -> None:
    if rmap.P.shape != (S.shape[1], S.shape[0]):
        raise ValueError(f"map of shape {rmap.P.shape} does not fit summing matrix {S.shape}")
    if rows != S.shape[0]:
        raise ValueError(f"forecast has {rows} rows, expected {S.shape[0]}")


def reconciler_matrix(rmap: ReconciliationMap, S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return S @ rmap.P


def reconcile_point(rmap: ReconciliationMap, S, y_hat) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    _check(rmap, S, y_hat.shape[0])
    return S @ (rmap.P @ y_hat)


def reconcile_samples(rmap: ReconciliationMap, S, Y_hat: SampleForecast) -> SampleForecast:
    """Reconcile every joint draw (column) of every horizon step."""
    S = np.asarray(S, dtype=float)
    _check(rmap, S, Y_hat.samples.shape[1])
    bottom = rmap.P @ Y_hat.samples
    return replace(Y_hat, samples=S @ bottom)
