"""Stacked gated recurrent network with a Gaussian output head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class NetShape:
    n_nodes: int
    data_dim: int  # lagged target + covariates
    hidden: int
    layers: int
    embedding: int = 4


def init_params(shape: NetShape, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases; insertion order is the flat weight order."""

    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    H = shape.hidden
    p: dict[str, np.ndarray] = {"embedding": rng.normal(0.0, 0.1, size=(shape.n_nodes, shape.embedding))}
    for layer in range(shape.layers):
        d_in = shape.data_dim if layer == 0 else H
        for gate in ("z", "c"):
            p[f"l{layer}.{gate}.W"] = glorot(d_in, H)
            if layer == 0:
                p[f"l{layer}.{gate}.E"] = glorot(shape.embedding, H)
            p[f"l{layer}.{gate}.U"] = glorot(H, H)
            p[f"l{layer}.{gate}.b"] = np.zeros(H)
    p["head.mu.w"] = glorot(H, 1)[:, 0]
    p["head.mu.b"] = np.zeros(())
    p["head.sigma.w"] = glorot(H, 1)[:, 0]
    p["head.sigma.b"] = np.zeros(())
    return p


def shape_from_params(params: dict) -> NetShape:
    emb = params["embedding"]
    value = emb.value if isinstance(emb, Tensor) else emb
    W0 = params["l0.z.W"]
    W0 = W0.value if isinstance(W0, Tensor) else W0
    layers = sum(1 for k in params if k.endswith(".z.U"))
    return NetShape(value.shape[0], W0.shape[0], W0.shape[1], layers, value.shape[1])


class RecurrentNet:
    """Forward pass of the network over a batch of rows.

    Each row is one (window, node) instance. Hidden state update per layer:
    ``z = sigmoid(x W + h U + b_z)``, ``c = tanh(x W' + h U' + b_c)``,
    ``h <- h + z * (c - h)``. Dropout masks only touch non-recurrent inputs.
    """

    def __init__(self, params: dict[str, Tensor], dropout: float = 0.0):
        self.params = params
        self.shape = shape_from_params(params)
        self.dropout = dropout

    def start(self, node_index: np.ndarray) -> "NetState":
        R = len(node_index)
        onehot = np.zeros((R, self.shape.n_nodes))
        onehot[np.arange(R), node_index] = 1.0
        emb = ad.matmul(onehot, self.params["embedding"])
        emb_proj = {g: emb @ self.params[f"l0.{g}.E"] for g in ("z", "c")}
        hidden = [Tensor(np.zeros((R, self.shape.hidden))) for _ in range(self.shape.layers)]
        return NetState(hidden, emb_proj)

    def _mask(self, rng, shape):
        if rng is None or self.dropout <= 0:
            return None
        keep = 1.0 - self.dropout
        return (rng.random(shape) < keep) / keep

    def step(self, state: "NetState", x: np.ndarray | Tensor, rng: np.random.Generator | None = None):
        """Advance one time step; returns (mu, sigma), each of shape (R,)."""
        p = self.params
        inp = x
        for layer in range(self.shape.layers):
            h = state.hidden[layer]
            if layer > 0:
                mask = self._mask(rng, inp.shape)
                if mask is not None:
                    inp = inp * mask
            pre = {}
            for g in ("z", "c"):
                a = ad.matmul(inp, p[f"l{layer}.{g}.W"]) + h @ p[f"l{layer}.{g}.U"] + p[f"l{layer}.{g}.b"]
                if layer == 0:
                    a = a + state.emb_proj[g]
                pre[g] = a
            z = ad.sigmoid(pre["z"])
            c = ad.tanh(pre["c"])
            h = h + z * (c - h)
            state.hidden[layer] = h
            inp = h
        mask = self._mask(rng, inp.shape)
        if mask is not None:
            inp = inp * mask
        mu = inp @ p["head.mu.w"] + p["head.mu.b"]
        sigma = ad.floor_at(ad.softplus(inp @ p["head.sigma.w"] + p["head.sigma.b"]), SIGMA_FLOOR)
        return mu, sigma


@dataclass
class NetState:
    hidden: list[Tensor]
    emb_proj: dict[str, Tensor]


def seasonal_features(positions: np.ndarray, period: int | None) -> np.ndarray:
    """sin/cos of the seasonal position; empty when there is no period."""
    positions = np.asarray(positions, dtype=float)
    if not period:
        return np.zeros(positions.shape + (0,))
    angle = 2 * np.pi * (positions % period) / period
    return np.stack([np.sin(angle), np.cos(angle)], axis=-1)
