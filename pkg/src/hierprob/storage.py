"""CSV persistence for forecasts, maps and score tables."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .arrange import GaussianForecast, SampleForecast

FLOAT_FORMAT = "%.12g"
# fixed gzip mtime keeps compressed files byte-identical across runs
GZIP = {"method": "gzip", "mtime": 0}


def write_csv(df: pd.DataFrame, path: str | Path) -> None:
    path = Path(path)
    compression = GZIP if path.suffix == ".gz" else None
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, compression=compression, lineterminator="\n")


def write_samples(sf: SampleForecast, path: str | Path) -> None:
    """One row per (step, node), one column per joint draw."""
    h, n, N = sf.samples.shape
    df = pd.DataFrame(sf.samples.reshape(h * n, N), columns=[f"s{j}" for j in range(N)])
    df.insert(0, "node", list(sf.node_ids) * h)
    df.insert(0, "step", np.repeat(np.arange(1, h + 1), n))
    write_csv(df, path)


def read_samples(path: str | Path, node_ids: tuple[str, ...] | None = None) -> SampleForecast:
    df = pd.read_csv(path, dtype={"node": str})
    steps = sorted(df["step"].unique())
    ids = tuple(df.loc[df["step"] == steps[0], "node"])
    if node_ids is not None and tuple(node_ids) != ids:
        raise ValueError("sample file rows do not follow the hierarchy's node order")
    values = df.drop(columns=["step", "node"]).to_numpy(dtype=float)
    return SampleForecast(values.reshape(len(steps), len(ids), -1), ids)


def write_gaussian(g: GaussianForecast, path: str | Path) -> None:
    n, h = g.mu.shape
    df = pd.DataFrame({
        "step": np.repeat(np.arange(1, h + 1), n),
        "node": list(g.node_ids) * h,
        "mu": g.mu.T.reshape(-1),
        "sigma": g.sigma.T.reshape(-1),
    })
    write_csv(df, path)


def write_matrix(M: np.ndarray, rows, cols, path: str | Path) -> None:
    df = pd.DataFrame(np.asarray(M, dtype=float), columns=list(cols))
    df.insert(0, "row", list(rows))
    write_csv(df, path)
