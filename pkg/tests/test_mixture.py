import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from crot.mixture import (
    Gamma,
    Gaussian1D,
    GaussianDiag,
    Kde,
    Mixture,
    Rayleigh,
    exp_family_view,
    gaussian_log_normalizer,
    gaussian_mixture,
    kde_build,
    mixture_moments,
)


@pytest.mark.parametrize(
    "comp",
    [Gaussian1D(0.3, 0.7), GaussianDiag([1.0], [2.0]), Gamma(2.5, 1.3), Gamma(0.7, 2.0), Rayleigh(1.7)],
)
def test_component_normalizes(comp):
    lo, hi = comp.support()
    f = lambda x: float(np.exp(comp.log_pdf(x)))
    total = integrate.quad(f, max(lo, -np.inf), hi, limit=200)[0]
    assert abs(total - 1.0) < 1e-6


def test_log_pdf_matches_scipy():
    x = np.linspace(0.1, 6.0, 25)
    np.testing.assert_allclose(Gamma(2.5, 1.3).log_pdf(x), stats.gamma(2.5, scale=1.3).logpdf(x), rtol=1e-12)
    np.testing.assert_allclose(Rayleigh(1.7).log_pdf(x), stats.rayleigh(scale=1.7).logpdf(x), rtol=1e-12)
    np.testing.assert_allclose(Gaussian1D(0.3, 0.7).log_pdf(x), stats.norm(0.3, 0.7).logpdf(x), rtol=1e-12)
    assert Gamma(2.0, 1.0).log_pdf(-1.0) == -np.inf
    assert Rayleigh(1.0).log_pdf(0.0) == -np.inf


def test_standard_normal_log_pdf_at_zero():
    m = Mixture.single(Gaussian1D(0.0, 1.0))
    assert np.isclose(m.log_pdf(0.0), -0.5 * np.log(2 * np.pi), atol=1e-15)


def test_identical_components_reduce_to_one():
    p = GaussianDiag([0.5, -1.0], [1.0, 3.0])
    m = Mixture([0.5, 0.5], (p, p))
    x = np.random.default_rng(0).normal(size=(10, 2))
    np.testing.assert_allclose(m.log_pdf(x), p.log_pdf(x), atol=1e-13)


def test_log_pdf_direct_summation():
    m = Mixture([0.5, 0.5], (Gaussian1D(0, 1), Gaussian1D(4, 1)))
    direct = 0.5 * stats.norm.pdf(2.0, 0, 1) + 0.5 * stats.norm.pdf(2.0, 4, 1)
    assert np.isclose(m.log_pdf(2.0), np.log(direct), rtol=1e-14)


def test_multivariate_log_pdf_matches_scipy(rng):
    m = gaussian_mixture([0.2, 0.8], rng.normal(size=(2, 3)), rng.uniform(0.5, 2, (2, 3)))
    x = rng.normal(size=(7, 3))
    expect = np.log(
        sum(w * stats.multivariate_normal(c.mean, np.diag(c.var)).pdf(x) for w, c in zip(m.weights, m.components))
    )
    np.testing.assert_allclose(m.log_pdf(x), expect, rtol=1e-12)


def test_dimension_mismatch():
    m = gaussian_mixture([1.0], [[0.0, 0.0]], [[1.0, 1.0]])
    with pytest.raises(ValueError):
        m.log_pdf(np.zeros((4, 3)))


def test_validation():
    with pytest.raises(ValueError):
        Gaussian1D(0.0, 0.0)
    with pytest.raises(ValueError):
        GaussianDiag([0.0], [1e-13])
    with pytest.raises(ValueError):
        GaussianDiag([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        Mixture([0.5, 0.4], (Gaussian1D(0, 1), Gaussian1D(1, 1)))
    with pytest.raises(ValueError):
        Mixture([0.5, 0.5], (Gaussian1D(0, 1), Gamma(1, 1)))
    with pytest.raises(ValueError):
        Mixture([], ())
    m = Mixture([0.5 + 4e-7, 0.5], (Gaussian1D(0, 1), Gaussian1D(1, 1)))
    assert abs(m.weights.sum() - 1.0) < 1e-15


def test_sample_mean_clt():
    x = Mixture.single(Gaussian1D(0.0, 1.0)).sample(100_000, np.random.default_rng(1))
    assert x.shape == (100_000, 1)
    assert abs(x.mean()) < 0.02


def test_sample_degenerate_weights():
    m = Mixture([1.0, 0.0], (Gaussian1D(-50, 1), Gaussian1D(50, 1)))
    assert np.all(m.sample(500, np.random.default_rng(2)) < 0)


def test_sample_deterministic():
    m = Mixture([0.3, 0.7], (Gamma(2, 1), Gamma(5, 0.5)))
    a = m.sample(100, np.random.default_rng(5))
    b = m.sample(100, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)
    assert np.all(a > 0)


def test_moments_law_of_total_variance():
    m = Mixture([0.5, 0.5], (Gaussian1D(-1, 1), Gaussian1D(1, 1)))
    mu, cov = mixture_moments(m)
    assert np.allclose(mu, 0.0) and np.allclose(cov, [[2.0]])
    x = m.sample(1_000_000, np.random.default_rng(3))
    assert abs(x.mean()) < 3 * np.sqrt(2 / 1e6)
    assert abs(x.var() - 2.0) < 0.02


def test_moments_match_samples(rng):
    m = gaussian_mixture([0.3, 0.5, 0.2], rng.normal(size=(3, 2)), rng.uniform(0.5, 2, (3, 2)))
    mu, cov = mixture_moments(m)
    x = m.sample(1_000_000, rng)
    se = np.sqrt(np.diag(cov) / x.shape[0])
    assert np.all(np.abs(x.mean(0) - mu) < 4 * se)
    np.testing.assert_allclose(np.cov(x.T), cov, atol=0.02)
    assert np.all(np.linalg.eigvalsh(cov) >= 0)


def test_moments_single_component():
    mu, cov = mixture_moments(gaussian_mixture([1.0], [[1.0, 2.0]], [[3.0, 4.0]]))
    np.testing.assert_allclose(mu, [1.0, 2.0])
    np.testing.assert_allclose(cov, np.diag([3.0, 4.0]), atol=1e-14)


def test_kde_build():
    one = kde_build([[1.0, 2.0]], 0.1)
    assert one.k == 1 and np.allclose(one.components[0].var, 0.1)
    k3 = kde_build(np.arange(6.0).reshape(3, 2), 0.5)
    np.testing.assert_allclose(k3.weights, 1 / 3)
    assert isinstance(k3, Kde) and k3.n == 3
    for c in k3.components:
        np.testing.assert_array_equal(c.var, [0.5, 0.5])
    with pytest.raises(ValueError):
        kde_build(np.empty((0, 2)), 0.1)
    with pytest.raises(ValueError):
        kde_build([[0.0]], 0.0)


def test_kde_log_pdf_direct_summation(rng):
    pts = rng.normal(size=(40, 2))
    eps = 0.05
    kde = kde_build(pts, eps)
    x = rng.normal(size=(6, 2))
    dens = np.mean([stats.multivariate_normal(p, eps * np.eye(2)).pdf(x) for p in pts], axis=0)
    np.testing.assert_allclose(kde.log_pdf(x), np.log(dens), rtol=1e-12)
    far = pts[0] + 10 * np.sqrt(eps) * 100
    assert kde.log_pdf(pts[0]) >= kde.log_pdf(far)


def test_kde_kernel_entropy_shift():
    pts = np.zeros((3, 4))
    a, b = kde_build(pts, 1e-2), kde_build(pts, 1e-6)
    assert np.isclose(a.kernel_entropy() - b.kernel_entropy(), 0.5 * 4 * np.log(1e-2 / 1e-6), rtol=1e-14)


def test_exp_family_standard_normal():
    v = exp_family_view(Gaussian1D(0.0, 1.0))
    np.testing.assert_allclose(v.theta, [0.0, -0.5])
    grid = np.linspace(-5, 5, 100)
    assert np.max(np.abs(v.log_density(grid) - stats.norm.logpdf(grid))) < 1e-10


def test_exp_family_round_trip(rng):
    for _ in range(20):
        c = GaussianDiag(rng.normal(size=3), rng.uniform(0.1, 3, 3))
        back = exp_family_view(c).to_component()
        np.testing.assert_allclose(back.mean, c.mean, atol=1e-10)
        np.testing.assert_allclose(back.var, c.var, rtol=1e-10)
        x = rng.normal(size=(5, 3))
        np.testing.assert_allclose(exp_family_view(c).log_density(x), c.log_pdf(x), atol=1e-10)


def test_exp_family_unsupported():
    with pytest.raises(TypeError):
        exp_family_view(Gamma(1.0, 1.0))
    with pytest.raises(ValueError):
        gaussian_log_normalizer([0.0, 0.5])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.lists(st.floats(0.05, 5), min_size=2, max_size=2),
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.lists(st.floats(0.05, 5), min_size=2, max_size=2),
)
def test_log_normalizer_convex(m1, v1, m2, v2):
    t1 = exp_family_view(GaussianDiag(m1, v1)).theta
    t2 = exp_family_view(GaussianDiag(m2, v2)).theta
    F = gaussian_log_normalizer
    lhs = F(0.5 * t1 + 0.5 * t2)
    assert lhs <= 0.5 * F(t1) + 0.5 * F(t2) + 1e-9 * (1 + abs(lhs))


def test_json_round_trip_bitwise(rng):
    m = gaussian_mixture(rng.dirichlet(np.ones(3)), rng.normal(size=(3, 2)), rng.uniform(0.1, 2, (3, 2)))
    import json

    back = Mixture.from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_array_equal(back.weights, m.weights)
    for a, b in zip(back.components, m.components):
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.var, b.var)
    for comp in (Gamma(2.0, 0.5), Rayleigh(1.2), Gaussian1D(0.1, 0.3)):
        d = Mixture.single(comp).to_dict()
        assert Mixture.from_dict(d).to_dict() == d


def test_from_dict_named_field_errors():
    d = {"family": "gaussian_1d", "weights": [0.25, 0.25], "components": [{"mu": 0, "sigma": 1}, {"mu": 1, "sigma": 1}]}
    with pytest.raises(ValueError, match="weights"):
        Mixture.from_dict(d)
    with pytest.raises(ValueError, match="family"):
        Mixture.from_dict({"weights": [1.0], "components": []})
