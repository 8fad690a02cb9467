import numpy as np
import pytest
from scipy import integrate, stats

from crot.bounds import (
    BoundReport,
    brute_force_logsum,
    chi2_kl_bound,
    crot_kl_bound,
    empirical_w2_ub,
    expfam_kl_bound,
    fdiv_derivative_bound,
    gelbrich_lb,
    hungarian_bound,
    kl_weights,
    logsum_bound,
    max_bound,
    scub,
)
from crot.distances import GroundDistanceSpec, cost_matrix, kl_gaussian, w2_gaussian
from crot.estimators import McConfig, mc_kl
from crot.mixture import Gaussian1D, GaussianDiag, Mixture, gaussian_mixture
from crot.transport import crot

from conftest import random_gmm, random_gmm_1d


def test_scub_and_max(rng):
    m = Mixture.single(Gaussian1D(0, 1))
    assert scub(m, m, GroundDistanceSpec("kl")) == 0.0
    u = Mixture([0.5, 0.5], (Gaussian1D(0, 1), Gaussian1D(2, 1)))
    M = cost_matrix(u, u, GroundDistanceSpec("tv"))
    assert np.isclose(scub(u, u, M.spec, M), M.values.mean())
    assert max_bound(np.full((3, 2), 1.5)) == 1.5
    for _ in range(20):
        m1, m2 = random_gmm_1d(rng), random_gmm_1d(rng)
        spec = GroundDistanceSpec("kl")
        M = cost_matrix(m1, m2, spec)
        h = crot(m1, m2, spec, "exact", M)[0]
        assert scub(m1, m2, spec, M) >= h - 1e-9
        assert max_bound(M) >= scub(m1, m2, spec, M)
    single = cost_matrix(m, Mixture.single(Gaussian1D(1, 1)), spec)
    assert max_bound(single) == crot(m, Mixture.single(Gaussian1D(1, 1)), spec)[0]
    with pytest.raises(ValueError):
        scub(m, m, GroundDistanceSpec("w2"))


def test_kl_weights():
    assert kl_weights([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert kl_weights([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2))
    assert kl_weights([0.5, 0.5], [1.0, 0.0]) == np.inf


def test_logsum_and_hungarian(rng):
    m = random_gmm(rng, 2, k=3)
    assert logsum_bound(m, m) == 0.0
    value, perm = hungarian_bound(m, m)
    assert value == 0.0 and list(perm) == [0, 1, 2]
    one_a, one_b = random_gmm(rng, 2, k=1), random_gmm(rng, 2, k=1)
    assert hungarian_bound(one_a, one_b)[0] == logsum_bound(one_a, one_b)
    for k in range(1, 7):
        m1, m2 = random_gmm(rng, 2, k=k), random_gmm(rng, 2, k=k)
        value, perm = hungarian_bound(m1, m2)
        assert abs(value - brute_force_logsum(m1, m2)) <= 1e-12 * max(1, value)
        assert logsum_bound(m1, m2) >= value - 1e-12
        assert logsum_bound(m1, m2, perm) == pytest.approx(value, rel=1e-14)
    with pytest.raises(ValueError):
        logsum_bound(random_gmm(rng, 2, k=2), random_gmm(rng, 2, k=3))
    with pytest.raises(ValueError):
        logsum_bound(m1, m2, [0] * m1.k)


def test_hungarian_lexicographic_ties():
    c = GaussianDiag([0.0], [1.0])
    m = Mixture([0.5, 0.5], (c, c))
    value, perm = hungarian_bound(m, m)
    assert value == 0.0 and list(perm) == [0, 1]


def test_bound_direction_against_mc(rng):
    cfg = McConfig(samples=20_000, seed=5)
    for _ in range(10):
        m1, m2 = random_gmm_1d(rng, k=3), random_gmm_1d(rng, k=3)
        est, se = mc_kl(m1, m2, cfg)
        assert logsum_bound(m1, m2) >= est - 3 * se
        assert crot_kl_bound(m1, m2) >= est - 3 * se
        assert crot_kl_bound(m1, m2, "sinkhorn") >= crot_kl_bound(m1, m2) - 1e-9


def test_chi2_bound():
    p = Gaussian1D(0, 1)
    assert chi2_kl_bound(p, p) == pytest.approx(0.0, abs=1e-9)
    assert abs(chi2_kl_bound(p, Gaussian1D(1, 1)) - (np.e - 1)) < 1e-8
    assert chi2_kl_bound(Gaussian1D(0, 2), Gaussian1D(0, 1)) == np.inf
    # narrow-q divergence is also found for mixtures
    wide = Mixture([0.5, 0.5], (Gaussian1D(0, 3), Gaussian1D(1, 1)))
    assert chi2_kl_bound(wide, Gaussian1D(0, 1)) == np.inf


def test_chi2_quadrature_oracle():
    f = lambda x: stats.norm.pdf(x, 0, 1) ** 2 / stats.norm.pdf(x, 0.5, 1.3)
    oracle = integrate.quad(f, -40, 40, limit=400, epsabs=1e-13)[0] - 1
    assert abs(chi2_kl_bound(Gaussian1D(0, 1), Gaussian1D(0.5, 1.3)) - oracle) < 1e-8


def test_chi2_multivariate_single_gaussians():
    p, q = GaussianDiag([0.0, 1.0], [1.0, 0.5]), GaussianDiag([0.5, 0.0], [1.5, 1.0])
    # the diagonal case factorizes into 1D integrals
    ratio = 1.0
    for d in range(2):
        ratio *= chi2_kl_bound(Gaussian1D(p.mean[d], np.sqrt(p.var[d])), Gaussian1D(q.mean[d], np.sqrt(q.var[d]))) + 1
    assert abs(chi2_kl_bound(p, q) - (ratio - 1)) < 1e-8
    with pytest.raises(ValueError):
        chi2_kl_bound(random_gmm(np.random.default_rng(0), 2, k=2), q)


def test_expfam_bound(rng):
    p = Mixture.single(Gaussian1D(0.3, 0.8))
    assert expfam_kl_bound(p, p).value == pytest.approx(0.0, abs=1e-12)
    for _ in range(20):
        a = Gaussian1D(rng.normal(), rng.uniform(0.5, 1.5))
        b = Gaussian1D(rng.normal(), rng.uniform(0.8, 2.0))
        e, c = expfam_kl_bound(Mixture.single(a), Mixture.single(b)), chi2_kl_bound(a, b)
        if np.isfinite(c):
            assert e.in_domain and e.value >= c - 1e-6
    bad = expfam_kl_bound(Mixture.single(Gaussian1D(0, 2)), Mixture.single(Gaussian1D(0, 1)))
    assert bad.value == np.inf and not bad.in_domain


def test_expfam_bound_mixture_against_mc(rng):
    cfg = McConfig(samples=20_000, seed=8)
    count = 0
    for _ in range(20):
        m1 = gaussian_mixture(rng.dirichlet([1, 1]), rng.normal(0, 1, (2, 1)), rng.uniform(0.3, 0.8, (2, 1)))
        m2 = gaussian_mixture(rng.dirichlet([1, 1]), rng.normal(0, 1, (2, 1)), rng.uniform(1.0, 2.0, (2, 1)))
        bound = expfam_kl_bound(m1, m2)
        if bound.in_domain:
            est, se = mc_kl(m1, m2, cfg)
            assert np.isfinite(bound.value) and bound.value >= est - 3 * se
            count += 1
    assert count > 0


def test_fdiv_derivative_bound():
    p, q = Gaussian1D(0, 1), Gaussian1D(0.7, 1.2)
    neglog, d_neglog = (lambda u: -np.log(u)), (lambda u: -1.0 / u)
    assert fdiv_derivative_bound(p, p, neglog, d_neglog) == 0.0
    assert abs(fdiv_derivative_bound(p, q, neglog, d_neglog) - chi2_kl_bound(p, q)) < 1e-8
    m1 = Mixture([0.3, 0.7], (Gaussian1D(-1, 1), Gaussian1D(1, 0.6)))
    m2 = Mixture([0.5, 0.5], (Gaussian1D(0, 1.5), Gaussian1D(2, 1.0)))
    assert abs(fdiv_derivative_bound(m1, m2, neglog, d_neglog) - chi2_kl_bound(m1, m2)) < 1e-8
    # f(u) = (u-1)^2 gives the Pearson chi-square int (q-p)^2/p
    sq, d_sq = (lambda u: (u - 1) ** 2), (lambda u: 2 * (u - 1))
    rng = np.random.default_rng(3)
    x = m1.sample(50_000, rng)
    r = np.expm1(m2.log_pdf(x) - m1.log_pdf(x)) ** 2
    assert fdiv_derivative_bound(m1, m2, sq, d_sq) >= r.mean() - 3 * r.std() / np.sqrt(r.size)
    with pytest.raises(ValueError):
        fdiv_derivative_bound(p, q, neglog, lambda u: np.nan)


def test_gelbrich(rng):
    m = random_gmm(rng, 3, k=3)
    assert gelbrich_lb(m, m) == pytest.approx(0.0, abs=1e-7)
    a, b = GaussianDiag([0, 1, 2], [1, 2, 3]), GaussianDiag([1, 1, 0], [2, 2, 1])
    assert gelbrich_lb(Mixture.single(a), Mixture.single(b)) == pytest.approx(w2_gaussian(a, b), rel=1e-10)


def test_empirical_w2(rng):
    m = random_gmm(rng, 2, k=2)
    small = empirical_w2_ub(m, m, 100, rng=np.random.default_rng(1))[0]
    large = empirical_w2_ub(m, m, 800, rng=np.random.default_rng(1))[0]
    assert 0 < large < small
    d1 = Mixture.single(GaussianDiag([0.0, 0.0], [1e-12, 1e-12]))
    d2 = Mixture.single(GaussianDiag([3.0, 0.0], [1e-12, 1e-12]))
    assert empirical_w2_ub(d1, d2, 50)[0] == pytest.approx(3.0, abs=1e-5)
    value, se = empirical_w2_ub(m, random_gmm(rng, 2, k=2), 200, rng=rng, replicates=4)
    assert np.isfinite(se) and se >= 0
    with pytest.raises(ValueError):
        empirical_w2_ub(m, m, 1)


def test_w2_ordering(rng):
    for _ in range(5):
        m1 = random_gmm(rng, 3, k=3)
        m2 = random_gmm(rng, 3, k=3)
        lb = gelbrich_lb(m1, m2)
        h = np.sqrt(crot(m1, m2, GroundDistanceSpec("w2_squared"))[0])
        assert h >= lb - 1e-9


def test_report_round_trip():
    rep = BoundReport("kl")
    rep.add("crot", "upper", lambda: 1.5)
    rep.add("gelbrich", "lower", lambda: 0.5)
    rep.reference = (1.0, 0.1)
    assert rep.consistent() and rep.value("crot") == 1.5
    back = BoundReport.from_dict(rep.to_dict())
    assert back.to_dict() == rep.to_dict()
    with pytest.raises(ValueError, match="side"):
        BoundReport.from_dict({"target": "kl", "bounds": [{"name": "x", "value": 1, "side": "middle", "seconds": 0}]})
