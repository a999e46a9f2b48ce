import numpy as np
import pytest

from hierprob.data import SeriesPanel, SyntheticParams, generate_synthetic
from hierprob.hierarchy import build_summing_matrix, coherency_residual
from hierprob.neural import autodiff as ad
from hierprob.neural.losses import EdgeAggregator
from hierprob.neural.network import NetShape, RecurrentNet, init_params, seasonal_features
from hierprob.neural.trainer import (TrainConfig, TrainingError, batch_loss, forecast, harden_bottom_up,
                                     load_model, make_windows, predict_parameters, save_model, train)

SMALL = dict(hidden=6, layers=2, epochs=2, context_length=8, horizon=3, batch_multiplier=8)


@pytest.fixture(scope="module")
def panel():
    from hierprob.hierarchy import fig1_hierarchy
    return generate_synthetic(fig1_hierarchy(), 60, 0, SyntheticParams(seasonal_period=6, seasonal_amplitude=2))


def test_determinism(fig1, panel):
    a = train(panel, fig1, TrainConfig(**SMALL))
    b = train(panel, fig1, TrainConfig(**SMALL))
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    assert a.loss_trace == b.loss_trace
    c = train(panel, fig1, TrainConfig(**SMALL, seed=1))
    assert not np.array_equal(a.params["head.mu.w"], c.params["head.mu.w"])


def test_lambda_zero_equals_kl_off(fig1, panel):
    a = train(panel, fig1, TrainConfig(**SMALL, lam=0.0, kl_mode="closed"))
    b = train(panel, fig1, TrainConfig(**SMALL, lam=0.0, kl_mode="off"))
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def _setup(fig1, panel, **kw):
    cfg = TrainConfig(**{**SMALL, "dropout": 0.0, **kw})
    rng = np.random.default_rng(0)
    shape = NetShape(8, 1, cfg.hidden, cfg.layers, cfg.embedding)
    params = {k: ad.parameter(v, k) for k, v in init_params(shape, rng).items()}
    values = panel.values / (1 + np.abs(panel.values).mean(1, keepdims=True))
    agg = EdgeAggregator.build(fig1)
    return cfg, params, values, agg


def test_descent_step(fig1, panel):
    cfg, params, values, agg = _setup(fig1, panel, lam=1.0)
    starts = np.arange(4)
    loss = batch_loss(params, values, starts, cfg, agg, None)
    loss.backward()
    before = loss.item()
    for p in params.values():
        p.value -= 1e-4 * p.grad
        p.zero_grad()
    assert batch_loss(params, values, starts, cfg, agg, None).item() < before


@pytest.mark.parametrize("mode", ["closed", "sampled"])
def test_unrolled_gradient(fig1, panel, mode):
    cfg, params, values, agg = _setup(fig1, panel, lam=0.5, kl_mode=mode, kl_samples=20, hidden=3)
    starts = np.array([0, 5])

    def f():
        return batch_loss(params, values, starts, cfg, agg, np.random.default_rng(3))

    f().backward()
    chosen = [params["l0.z.W"], params["head.sigma.w"], params["embedding"]]
    num = ad.numerical_gradient(lambda: f().item(), chosen)
    for p, g in zip(chosen, num):
        np.testing.assert_allclose(p.grad, g, rtol=1e-5, atol=1e-7)


def test_windows_and_errors(fig1, panel, monkeypatch):
    assert len(make_windows(np.zeros((2, 20)), 8, 3)) == 9
    with pytest.raises(TrainingError):
        make_windows(np.zeros((2, 11)), 8, 3)
    import hierprob.neural.trainer as trainer_mod
    monkeypatch.setattr(trainer_mod, "batch_loss", lambda *a, **k: ad.Tensor(np.nan))
    with pytest.raises(TrainingError, match="non-finite"):
        train(panel, fig1, TrainConfig(**SMALL))


def test_forecast_shapes_and_hardening(fig1, panel, tmp_path):
    model = train(panel, fig1, TrainConfig(**SMALL))
    gauss, samples = forecast(model, panel, 4, 50, 7)
    assert gauss.mu.shape == (8, 4) and np.all(gauss.sigma > 0)
    assert samples.samples.shape == (4, 8, 50)
    _, again = forecast(model, panel, 4, 50, 7)
    np.testing.assert_array_equal(samples.samples, again.samples)
    S = build_summing_matrix(fig1)
    hard = harden_bottom_up(samples, S).samples
    np.testing.assert_array_equal(hard[:, 3:], samples.samples[:, 3:])
    assert max(coherency_residual(S, hard[k]) for k in range(4)) <= 1e-9
    zero, none = forecast(model, panel, 0, 10, 0)
    assert zero.mu.shape == (8, 0) and none is None

    save_model(model, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    np.testing.assert_array_equal(predict_parameters(back, panel, 3).mu, predict_parameters(model, panel, 3).mu)


def test_seasonal_features():
    f = seasonal_features(np.array([0, 3]), 12)
    np.testing.assert_allclose(f, [[0, 1], [1, 0]], atol=1e-12)
    assert seasonal_features(np.array([0, 1]), None).shape == (2, 0)


def test_dropout_only_in_training(fig1):
    rng = np.random.default_rng(0)
    params = {k: ad.as_tensor(v) for k, v in init_params(NetShape(8, 1, 5, 2), rng).items()}
    net = RecurrentNet(params, dropout=0.5)
    x = np.ones((8, 1))
    a = net.step(net.start(np.arange(8)), x)[0].value
    b = net.step(net.start(np.arange(8)), x)[0].value
    np.testing.assert_array_equal(a, b)
    c = net.step(net.start(np.arange(8)), x, np.random.default_rng(1))[0].value
    assert not np.array_equal(a, c)


def test_config_round_trip():
    cfg = TrainConfig(hidden=12, seasonal_period=7, edge_weights=(1.0, 2.0, 3.0))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        TrainConfig(dropout=1.5)
    with pytest.raises(ValueError):
        TrainConfig(kl_mode="other")
