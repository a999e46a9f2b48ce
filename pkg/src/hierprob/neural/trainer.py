"""KL-regularised training, mean-fed forecasting and bottom-up hardening."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..arrange import GaussianForecast, SampleForecast
from ..data import ScaleStats, SeriesPanel, SplitConfig, scale_panel
from ..hierarchy import HierarchySpec, build_summing_matrix
from ..reconcile import build_bu, reconcile_samples
from . import autodiff as ad
from .autodiff import Tensor
from .losses import KL_MODES, EdgeAggregator, total_loss
from .network import NetShape, RecurrentNet, init_params, seasonal_features

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 10
    layers: int = 2
    dropout: float = 0.1
    epochs: int = 20
    lam: float = 0.0
    learning_rate: float = 1e-2
    final_learning_rate: float | None = None  # geometric per-epoch decay towards this rate
    batch_multiplier: int = 16  # windows per batch; batch size = multiplier * n rows
    context_length: int = 24
    horizon: int = 4
    seed: int = 0
    kl_mode: str = "closed"
    kl_samples: int = 100
    embedding: int = 4
    seasonal_period: int | None = None
    clip_norm: float = 10.0
    edge_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kl_mode not in KL_MODES:
            raise ValueError(f"kl_mode must be one of {KL_MODES}")
        if self.batch_multiplier < 1:
            raise ValueError("batch_multiplier must be a positive integer")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError("lambda must be finite and non-negative")
        if self.hidden < 1 or self.layers < 1 or not 0 <= self.dropout < 1:
            raise ValueError("invalid network size or dropout")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        d = dict(d)
        if d.get("edge_weights") is not None:
            d["edge_weights"] = tuple(float(w) for w in d["edge_weights"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["edge_weights"] is not None:
            d["edge_weights"] = list(d["edge_weights"])
        return d


@dataclass
class TrainedModel:
    params: dict[str, np.ndarray]
    scales: np.ndarray
    config: TrainConfig
    hierarchy: HierarchySpec
    loss_trace: list[float] = field(default_factory=list)
    history_length: int = 0

    @property
    def net_shape(self) -> NetShape:
        return NetShape(self.hierarchy.n, self.params["l0.z.W"].shape[0], self.config.hidden,
                        self.config.layers, self.config.embedding)


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p.value = p.value - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _data_features(lags: np.ndarray, positions: np.ndarray, period: int | None) -> np.ndarray:
    """(rows, steps) lags and positions -> (rows, steps, 1 + covariates)."""
    return np.concatenate([lags[..., None], seasonal_features(positions, period)], axis=-1)


def make_windows(values: np.ndarray, context: int, horizon: int) -> np.ndarray:
    """Start offsets of all windows with ``context + horizon`` targets and one lag."""
    n_windows = values.shape[1] - (context + horizon)
    if n_windows < 1:
        raise TrainingError(
            f"need more than {context + horizon} observations for context {context} and horizon {horizon}")
    return np.arange(n_windows)


def unroll(net: RecurrentNet, values: np.ndarray, starts: np.ndarray, config: TrainConfig,
           rng: np.random.Generator | None) -> tuple[Tensor, Tensor, np.ndarray]:
    """Teacher-forced pass over windows of every node.

    Returns mu, sigma of shape (horizon, B, n) for the prediction range of each
    window and the matching targets.
    """
    n = values.shape[0]
    B = len(starts)
    C, h = config.context_length, config.horizon
    L = C + h
    offsets = starts[:, None] + np.arange(L + 1)[None, :]  # (B, L+1)
    block = values[:, offsets]  # (n, B, L+1)
    block = np.transpose(block, (1, 0, 2)).reshape(B * n, L + 1)  # row = b*n + i
    positions = np.repeat(offsets[:, 1:], n, axis=0)
    feats = _data_features(block[:, :-1], positions, config.seasonal_period)
    node_index = np.tile(np.arange(n), B)
    state = net.start(node_index)
    mus, sigmas = [], []
    for t in range(L):
        mu, sigma = net.step(state, feats[:, t, :], rng)
        if t >= C:
            mus.append(mu)
            sigmas.append(sigma)
    mu = ad.stack(mus, axis=0).reshape((h, B, n))
    sigma = ad.stack(sigmas, axis=0).reshape((h, B, n))
    target = np.transpose(block[:, C + 1:].reshape(B, n, h), (2, 0, 1))
    return mu, sigma, target


def batch_loss(params: dict[str, Tensor], values: np.ndarray, starts: np.ndarray, config: TrainConfig,
               agg: EdgeAggregator, rng: np.random.Generator | None, kl_mode: str | None = None) -> Tensor:
    """Mean loss per window for one batch holding all nodes of ``len(starts)`` windows."""
    net = RecurrentNet(params, config.dropout)
    mu, sigma, target = unroll(net, values, starts, config, rng)
    mode = kl_mode or config.kl_mode
    noise = None
    if mode == "sampled" and config.lam > 0:
        noise = (rng or np.random.default_rng(0)).standard_normal((config.kl_samples,) + mu.shape)
    loss = total_loss(mu, sigma, target, agg, config.lam, mode, noise)
    return loss * (1.0 / len(starts))


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and norm > max_norm:
        for k in grads:
            grads[k] = grads[k] * (max_norm / norm)
    return norm


def train(panel: SeriesPanel, hierarchy: HierarchySpec, config: TrainConfig) -> TrainedModel:
    """Fit the network on every observation of ``panel`` (the conditioning range).

    Each batch contains all n nodes for ``batch_multiplier`` aligned windows, so
    the KL term can be evaluated over every parent/children group.
    """
    if tuple(panel.node_ids) != tuple(hierarchy.nodes):
        raise ValueError("panel rows do not follow the hierarchy's node order")
    scaled, stats = scale_panel(panel, SplitConfig(panel.T, 0))
    values = scaled.values
    starts_all = make_windows(values, config.context_length, config.horizon)
    rng = np.random.default_rng(config.seed)
    data_dim = 1 + seasonal_features(np.zeros(1), config.seasonal_period).shape[-1]
    shape = NetShape(hierarchy.n, data_dim, config.hidden, config.layers, config.embedding)
    params = {k: ad.parameter(v, k) for k, v in init_params(shape, rng).items()}
    agg = EdgeAggregator.build(hierarchy, stats.scales, config.edge_weights)
    opt = Adam(params, config.learning_rate)
    trace = []
    B = config.batch_multiplier
    decay = 1.0
    if config.final_learning_rate and config.epochs > 1:
        decay = (config.final_learning_rate / config.learning_rate) ** (1.0 / (config.epochs - 1))
    for epoch in range(config.epochs):
        opt.lr = config.learning_rate * decay ** epoch
        order = rng.permutation(starts_all)
        losses = []
        for i in range(0, len(order), B):
            starts = order[i:i + B]
            loss = batch_loss(params, values, starts, config, agg, rng)
            if not np.isfinite(loss.value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {i // B}")
            for p in params.values():
                p.zero_grad()
            loss.backward()
            grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.value)) for k, p in params.items()}
            _clip(grads, config.clip_norm)
            opt.step(grads)
            losses.append(loss.item())
        trace.append(float(np.mean(losses)))
    return TrainedModel({k: p.value.copy() for k, p in params.items()}, stats.scales, config,
                        hierarchy, trace, panel.T)


def predict_parameters(model: TrainedModel, panel: SeriesPanel, h: int) -> GaussianForecast:
    """Roll the network forward ``h`` steps past the end of ``panel``, feeding predicted means."""
    hier = model.hierarchy
    n = hier.n
    if h <= 0:
        empty = np.zeros((n, 0))
        return GaussianForecast(empty, empty.copy(), hier.nodes)
    cfg = model.config
    values = panel.values / model.scales[:, None]
    C = min(cfg.context_length, panel.T - 1)
    T = panel.T
    net = RecurrentNet({k: Tensor(v) for k, v in model.params.items()}, dropout=0.0)
    state = net.start(np.arange(n))
    mu = sigma = None
    for t in range(T - C, T):
        feats = _data_features(values[:, t - 1:t], np.full((n, 1), t), cfg.seasonal_period)[:, 0]
        mu, sigma = net.step(state, feats)
    # the last conditioning step leaves the one-step-ahead prediction
    mus, sigmas = [], []
    lag = values[:, T - 1]
    for k in range(h):
        feats = _data_features(lag[:, None], np.full((n, 1), T + k), cfg.seasonal_period)[:, 0]
        mu, sigma = net.step(state, feats)
        mus.append(mu.value.copy())
        sigmas.append(sigma.value.copy())
        lag = mu.value
    scales = model.scales[:, None]
    return GaussianForecast(np.stack(mus, axis=1) * scales, np.stack(sigmas, axis=1) * scales, hier.nodes)


def forecast(model: TrainedModel, panel: SeriesPanel, h: int, N: int, seed: int | None
             ) -> tuple[GaussianForecast, SampleForecast | None]:
    """Gaussian parameters per node/step plus N reparameterised joint draws."""
    gauss = predict_parameters(model, panel, h)
    if h <= 0:
        return gauss, None
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((h, model.hierarchy.n, N))
    draws = gauss.mu.T[:, :, None] + gauss.sigma.T[:, :, None] * z
    return gauss, SampleForecast(draws, model.hierarchy.nodes, seed)


def harden_bottom_up(samples: SampleForecast, S) -> SampleForecast:
    """Replace every upper row by the aggregate of its bottom draws."""
    return reconcile_samples(build_bu(S), S, samples)


def save_model(model: TrainedModel, path: str | Path) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "edges": [[v, model.hierarchy.parent[v] or ""] for v in model.hierarchy.nodes],
        "loss_trace": model.loss_trace,
        "history_length": model.history_length,
        "param_names": list(model.params),
    }
    arrays = {f"param:{k}": v for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), scales=model.scales, **arrays)


def load_model(path: str | Path) -> TrainedModel:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {meta.get('format_version')}")
        params = {k: z[f"param:{k}"].copy() for k in meta["param_names"]}
        scales = z["scales"].copy()
    hierarchy = HierarchySpec.from_edges([(c, p or None) for c, p in meta["edges"]])
    return TrainedModel(params, scales, TrainConfig.from_dict(meta["config"]), hierarchy,
                        meta["loss_trace"], meta["history_length"])


def predictive_incoherence(gauss: GaussianForecast, hierarchy: HierarchySpec) -> float:
    """Mean over horizon steps of the coherency residual of the predictive means."""
    from ..hierarchy import coherency_residual

    S = build_summing_matrix(hierarchy)
    if gauss.horizon == 0:
        return 0.0
    return float(np.mean([coherency_residual(S, gauss.mu[:, k]) for k in range(gauss.horizon)]))
