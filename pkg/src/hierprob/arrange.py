"""Joint sample matrices from per-node marginal draws (stack / rank / random)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class GaussianForecast:
    """Per-node Gaussian predictive parameters, arrays of shape ``(n, h)``."""

    mu: np.ndarray
    sigma: np.ndarray
    node_ids: tuple[str, ...]

    @property
    def horizon(self) -> int:
        return self.mu.shape[1]

    def draw(self, N: int, seed: int | None) -> dict[str, np.ndarray]:
        """Independent draws per node, each of shape ``(h, N)``."""
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((len(self.node_ids), self.horizon, N))
        x = self.mu[:, :, None] + self.sigma[:, :, None] * z
        return {v: x[i] for i, v in enumerate(self.node_ids)}


@dataclass(frozen=True)
class SampleForecast:
    """Joint draws: ``samples[k]`` is the ``n x N`` matrix for horizon step k."""

    samples: np.ndarray
    node_ids: tuple[str, ...]
    seed: int | None = None

    def __post_init__(self):
        if self.samples.ndim != 3:
            raise ValueError("samples must have shape (h, n, N)")
        if self.samples.shape[2] < 2:
            raise ValueError("at least two joint draws are required")
        if self.samples.shape[1] != len(self.node_ids):
            raise ValueError("row count does not match node ids")

    @property
    def N(self) -> int:
        return self.samples.shape[2]

    @property
    def horizon(self) -> int:
        return self.samples.shape[0]


def _stack_rows(marginals: Mapping[str, np.ndarray], node_ids: Sequence[str] | None) -> tuple[np.ndarray, tuple[str, ...]]:
    node_ids = tuple(marginals) if node_ids is None else tuple(node_ids)
    missing = [v for v in node_ids if v not in marginals]
    if missing:
        raise ValueError(f"no draws for node {missing[0]!r}")
    rows = [np.atleast_2d(np.asarray(marginals[v], dtype=float)) for v in node_ids]
    sizes = {r.shape for r in rows}
    if len(sizes) != 1:
        raise ValueError(f"unequal draw counts across nodes: {sorted(sizes)}")
    Y = np.stack(rows, axis=1)  # (h, n, N)
    if Y.shape[2] < 2:
        raise ValueError("at least two draws per node are required")
    return Y, node_ids


def arrange_stack(marginals: Mapping[str, np.ndarray], node_ids: Sequence[str] | None = None,
                  seed: int | None = None) -> SampleForecast:
    """Concatenate each node's draws in generation order (independence coupling)."""
    Y, ids = _stack_rows(marginals, node_ids)
    return SampleForecast(Y, ids, seed)


def arrange_rank(marginals: Mapping[str, np.ndarray], node_ids: Sequence[str] | None = None,
                 seed: int | None = None) -> SampleForecast:
    """Sort every row so column i holds each node's i-th order statistic."""
    Y, ids = _stack_rows(marginals, node_ids)
    return SampleForecast(np.sort(Y, axis=2), ids, seed)


def arrange_random(marginals: Mapping[str, np.ndarray], node_ids: Sequence[str] | None = None,
                   seed: int | None = None) -> SampleForecast:
    """Permute every row independently with a seeded generator."""
    Y, ids = _stack_rows(marginals, node_ids)
    rng = np.random.default_rng(seed)
    Y = rng.permuted(Y, axis=2)
    return SampleForecast(Y, ids, seed)


ARRANGEMENTS = {"stack": arrange_stack, "rank": arrange_rank, "random": arrange_random}
