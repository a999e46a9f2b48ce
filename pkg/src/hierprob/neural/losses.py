"""Gaussian likelihood and the parent-vs-children KL regulariser."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..hierarchy import HierarchySpec
from . import autodiff as ad
from .autodiff import Tensor

HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)
KL_MODES = ("closed", "sampled", "off")


def _finite(*arrays) -> None:
    for a in arrays:
        v = a.value if isinstance(a, Tensor) else np.asarray(a)
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("non-finite input to loss")


def nll_loss(mu, sigma, y) -> Tensor:
    """Summed Gaussian negative log density of ``y``."""
    mu, sigma = ad.as_tensor(mu), ad.as_tensor(sigma)
    _finite(mu, sigma, y)
    if np.any(sigma.value <= 0):
        raise ValueError("sigma must be positive")
    z = (np.asarray(y, dtype=float) - mu) / sigma
    return (0.5 * ad.square(z) + ad.log(sigma) + HALF_LOG_2PI).sum()


def _symmetric_kl(mu_a, var_a, mu_b, var_b) -> Tensor:
    # the log-variance terms of the two directions cancel
    d2 = ad.square(mu_a - mu_b)
    return 0.5 * ((var_a + d2) / (2.0 * var_b) + (var_b + d2) / (2.0 * var_a) - 1.0)


def kl_normal(mu1, sigma1, mu2, sigma2) -> Tensor:
    """KL(N(mu1, sigma1^2) || N(mu2, sigma2^2))."""
    mu1, sigma1, mu2, sigma2 = (ad.as_tensor(a) for a in (mu1, sigma1, mu2, sigma2))
    return (ad.log(sigma2) - ad.log(sigma1)
            + (ad.square(sigma1) + ad.square(mu1 - mu2)) / (2.0 * ad.square(sigma2)) - 0.5)


def kl_gaussian_symmetric(parent: tuple, children: Sequence[tuple]) -> Tensor:
    """Symmetric KL between the parent Gaussian and the sum of independent child Gaussians."""
    if not children:
        raise ValueError("at least one child is required")
    mu_p, sd_p = (ad.as_tensor(a) for a in parent)
    if np.any(sd_p.value <= 0) or any(np.any(ad.as_tensor(s).value <= 0) for _, s in children):
        raise ValueError("sigma must be positive")
    mu_s = ad.as_tensor(children[0][0])
    var_s = ad.square(children[0][1])
    for mu_c, sd_c in children[1:]:
        mu_s = mu_s + mu_c
        var_s = var_s + ad.square(sd_c)
    return _symmetric_kl(mu_p, ad.square(sd_p), mu_s, var_s)


def _moments(x: Tensor) -> tuple[Tensor, Tensor]:
    """Sample mean and unbiased variance along the leading (draw) axis."""
    m = x.mean(axis=0)
    var = ad.square(x - m).sum(axis=0) * (1.0 / (x.shape[0] - 1))
    return m, var


def kl_sampled_symmetric(parent: tuple, children: Sequence[tuple], noise) -> Tensor:
    """Sample-based symmetric KL through reparameterised draws.

    ``noise`` has shape ``(1 + len(children), N_kl)`` of pre-drawn standard
    normals: row 0 drives the parent, row c+1 drives child c. Both sample sets
    are moment-matched to Gaussians and the closed-form KL is averaged over
    the two directions. Gradients reach mu and sigma only.
    """
    noise = np.asarray(noise, dtype=float)
    if noise.ndim != 2 or noise.shape[0] != 1 + len(children):
        raise ValueError("noise must have one row for the parent and one per child")
    if noise.shape[1] < 2:
        raise ValueError("N_kl must be at least 2")
    mu_p, sd_p = (ad.as_tensor(a) for a in parent)
    xp = mu_p + sd_p * noise[0]
    xs = None
    for k, (mu_c, sd_c) in enumerate(children):
        xc = ad.as_tensor(mu_c) + ad.as_tensor(sd_c) * noise[k + 1]
        xs = xc if xs is None else xs + xc
    mp, vp = _moments(xp)
    ms, vs = _moments(xs)
    return _symmetric_kl(mp, vp, ms, vs)


@dataclass(frozen=True)
class EdgeAggregator:
    """Maps node-axis parameters to (parent, children-sum) pairs for every internal node.

    Child parameters are rescaled into the parent's units before summing, so
    the comparison holds in original units even though the network works on
    per-node scaled series.
    """

    parent_index: np.ndarray
    mean_weights: np.ndarray  # n_internal x n
    var_weights: np.ndarray
    edge_weights: np.ndarray  # per internal node lambda multipliers

    @classmethod
    def build(cls, hierarchy: HierarchySpec, scales: np.ndarray | None = None,
              edge_weights: Sequence[float] | None = None) -> "EdgeAggregator":
        n = hierarchy.n
        scales = np.ones(n) if scales is None else np.asarray(scales, dtype=float)
        internal = hierarchy.internal_nodes
        A = np.zeros((len(internal), n))
        for r, v in enumerate(internal):
            p = hierarchy.index(v)
            for c in hierarchy.children(v):
                A[r, hierarchy.index(c)] = scales[hierarchy.index(c)] / scales[p]
        w = np.ones(len(internal)) if edge_weights is None else np.asarray(edge_weights, dtype=float)
        if w.shape != (len(internal),):
            raise ValueError("need one edge weight per internal node")
        return cls(np.array([hierarchy.index(v) for v in internal]), A, A ** 2, w)


def hierarchy_kl(mu: Tensor, sigma: Tensor, agg: EdgeAggregator, mode: str = "closed",
                 noise: np.ndarray | None = None) -> Tensor:
    """Weighted sum of symmetric KL terms over internal nodes; node axis last."""
    if agg.parent_index.size == 0:
        return ad.Tensor(0.0)
    if mode == "closed":
        mu_p = mu[..., agg.parent_index]
        var_p = ad.square(sigma[..., agg.parent_index])
        mu_s = mu @ agg.mean_weights.T
        var_s = ad.square(sigma) @ agg.var_weights.T
        terms = _symmetric_kl(mu_p, var_p, mu_s, var_s)
    elif mode == "sampled":
        if noise is None or noise.shape[1:] != mu.shape:
            raise ValueError("sampled mode needs noise of shape (N_kl,) + mu.shape")
        x = mu + sigma * noise  # (N_kl, ..., n)
        xp = x[..., agg.parent_index]
        # children of one parent get independent draws: the sum uses their own noise
        xs = x @ agg.mean_weights.T
        mp, vp = _moments(xp)
        ms, vs = _moments(xs)
        terms = _symmetric_kl(mp, vp, ms, vs)
    else:
        raise ValueError(f"unknown kl mode {mode!r}")
    return (terms * agg.edge_weights).sum()


def total_loss(mu: Tensor, sigma: Tensor, y, agg: EdgeAggregator, lam: float,
               kl_mode: str = "closed", noise: np.ndarray | None = None) -> Tensor:
    """NLL plus ``lam`` times the hierarchy KL; arrays carry the node axis last.

    ``kl_mode='off'`` skips the regulariser entirely.
    """
    if not np.isfinite(lam) or lam < 0:
        raise ValueError("lambda must be finite and non-negative")
    if mu.shape[-1] != agg.mean_weights.shape[1]:
        raise ValueError(f"batch holds {mu.shape[-1]} nodes, hierarchy has {agg.mean_weights.shape[1]}")
    nll = nll_loss(mu, sigma, y)
    if kl_mode == "off":
        return nll
    return nll + lam * hierarchy_kl(mu, sigma, agg, kl_mode, noise)
