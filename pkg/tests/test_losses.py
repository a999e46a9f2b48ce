import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hierprob.neural import autodiff as ad
from hierprob.neural.losses import (EdgeAggregator, hierarchy_kl, kl_gaussian_symmetric, kl_normal,
                                    kl_sampled_symmetric, nll_loss, total_loss)


def test_nll_examples():
    assert nll_loss(0.0, 1.0, 0.0).item() == pytest.approx(0.5 * np.log(2 * np.pi))
    mu, sd, y = np.array([1.0, -2]), np.array([0.5, 3]), np.array([0.3, 4])
    assert nll_loss(mu, sd, y).item() == pytest.approx(-stats.norm.logpdf(y, mu, sd).sum(), rel=1e-12)
    with pytest.raises(ValueError):
        nll_loss(0.0, 0.0, 1.0)
    with pytest.raises(FloatingPointError):
        nll_loss(np.nan, 1.0, 1.0)


def test_nll_gradient_closed_form():
    mu, sd = ad.parameter(np.array(0.4)), ad.parameter(np.array(1.5))
    nll_loss(mu, sd, 2.0).backward()
    assert mu.grad == pytest.approx(-(2.0 - 0.4) / 1.5 ** 2)
    assert sd.grad == pytest.approx(1 / 1.5 - (2.0 - 0.4) ** 2 / 1.5 ** 3)


def test_kl_examples():
    assert kl_gaussian_symmetric((2.0, 1.0), [(1.0, 0.6), (1.0, 0.8)]).item() == pytest.approx(0, abs=1e-12)
    assert kl_gaussian_symmetric((1.0, 1.0), [(0.0, 1.0)]).item() == pytest.approx(0.5)
    assert kl_normal(1.0, 1.0, 0.0, 1.0).item() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        kl_gaussian_symmetric((0.0, -1.0), [(0.0, 1.0)])
    with pytest.raises(ValueError):
        kl_gaussian_symmetric((0.0, 1.0), [])


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 3), st.floats(-5, 5), st.floats(0.1, 3))
def test_kl_symmetric_matches_directional_average(m1, s1, m2, s2):
    sym = kl_gaussian_symmetric((m1, s1), [(m2, s2)]).item()
    avg = 0.5 * (kl_normal(m1, s1, m2, s2).item() + kl_normal(m2, s2, m1, s1).item())
    assert sym == pytest.approx(avg, rel=1e-9, abs=1e-12)
    assert sym == pytest.approx(kl_gaussian_symmetric((m2, s2), [(m1, s1)]).item(), rel=1e-12, abs=1e-15)
    assert sym >= 0


def test_sampled_identical_is_small():
    noise = np.random.default_rng(0).standard_normal((2, 10_000))
    assert abs(kl_sampled_symmetric((1.0, 2.0), [(1.0, 2.0)], noise).item()) < 0.02
    with pytest.raises(ValueError):
        kl_sampled_symmetric((1.0, 2.0), [(1.0, 2.0)], noise[:, :1])


def test_sampled_mu_gradient_vs_finite_difference():
    noise = np.random.default_rng(1).standard_normal((3, 500))
    mp = ad.parameter(np.array(0.7))

    def f():
        return kl_sampled_symmetric((mp, 1.2), [(0.3, 0.5), (0.1, 0.9)], noise)

    f().backward()
    (num,) = ad.numerical_gradient(lambda: f().item(), [mp])
    assert mp.grad == pytest.approx(num, rel=1e-3)


def _fig1_arrays(rng, coherent=False):
    from hierprob.hierarchy import fig1_hierarchy
    h = fig1_hierarchy()
    mu = rng.normal(size=(2, 8))
    sd = rng.uniform(0.5, 1.5, size=(2, 8))
    if coherent:
        mu[:, 1] = mu[:, 3:6].sum(1)
        mu[:, 2] = mu[:, 6:8].sum(1)
        mu[:, 0] = mu[:, 1] + mu[:, 2]
        sd[:, 1] = np.sqrt((sd[:, 3:6] ** 2).sum(1))
        sd[:, 2] = np.sqrt((sd[:, 6:8] ** 2).sum(1))
        sd[:, 0] = np.sqrt(sd[:, 1] ** 2 + sd[:, 2] ** 2)
    return h, ad.parameter(mu), ad.parameter(sd)


def test_total_loss_examples(rng):
    h, mu, sd = _fig1_arrays(rng)
    agg = EdgeAggregator.build(h)
    y = rng.normal(size=(2, 8))
    nll = nll_loss(mu, sd, y).item()
    assert total_loss(mu, sd, y, agg, 0.0).item() == nll
    k1 = total_loss(mu, sd, y, agg, 1.0).item() - nll
    k2 = total_loss(mu, sd, y, agg, 2.0).item() - nll
    assert k2 == pytest.approx(2 * k1, rel=1e-12)
    # per-edge oracle built from the scalar op
    expected = sum(kl_gaussian_symmetric((mu.value[t, p], sd.value[t, p]),
                                         [(mu.value[t, c], sd.value[t, c]) for c in kids]).item()
                   for t in range(2) for p, kids in ((0, (1, 2)), (1, (3, 4, 5)), (2, (6, 7))))
    assert k1 == pytest.approx(expected, rel=1e-12)

    h, mu, sd = _fig1_arrays(rng, coherent=True)
    assert hierarchy_kl(mu, sd, agg).item() == pytest.approx(0, abs=1e-10)
    with pytest.raises(ValueError):
        total_loss(mu[:, :7], sd[:, :7], y[:, :7], agg, 1.0)
    with pytest.raises(ValueError):
        total_loss(mu, sd, y, agg, -1.0)


def test_scaled_edges_compare_in_original_units(rng):
    from hierprob.hierarchy import HierarchySpec
    h = HierarchySpec.from_edges([("t", None), ("a", "t"), ("b", "t")])
    scales = np.array([4.0, 1.0, 2.0])
    mu_raw, sd_raw = np.array([3.0, 1.0, 2.0]), np.array([np.sqrt(5.0), 1.0, 2.0])
    agg = EdgeAggregator.build(h, scales)
    kl = hierarchy_kl(ad.as_tensor(mu_raw / scales), ad.as_tensor(sd_raw / scales), agg)
    assert kl.item() == pytest.approx(0, abs=1e-12)


def test_hierarchy_kl_sampled_close_to_closed(rng):
    h, mu, sd = _fig1_arrays(rng)
    agg = EdgeAggregator.build(h)
    noise = rng.standard_normal((20_000, 2, 8))
    closed = hierarchy_kl(mu, sd, agg, "closed").item()
    sampled = hierarchy_kl(mu, sd, agg, "sampled", noise).item()
    assert sampled == pytest.approx(closed, abs=0.05 * 6)
