"""Ground distances between individual components and cost-matrix assembly.

Closed forms are used where they exist (Gaussian KL, W2, Renyi, 1D TV);
everything else is a deterministic numerical estimate: adaptive quadrature
in 1D, seeded Monte Carlo in higher dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from . import _quad
from .mixture import (
    Component,
    Gaussian1D,
    GaussianDiag,
    Mixture,
    as_mixture,
    gaussian_params,
    is_gaussian,
)

KINDS = ("kl", "w2_squared", "w2", "tv", "renyi", "js_alpha_sqrt", "wasserstein_1d_p")
_SYMMETRIC = {"w2_squared", "w2", "tv", "js_alpha_sqrt", "wasserstein_1d_p"}
_CLI_ALIASES = {"w2sq": "w2_squared", "js": "js_alpha_sqrt", "w1d": "wasserstein_1d_p"}
_CLI_NAMES = {"w2_squared": "w2sq", "js_alpha_sqrt": "js", "wasserstein_1d_p": "w1d"}


@dataclass(frozen=True)
class GroundDistanceSpec:
    """Which ground distance to use and how to estimate it."""

    kind: str
    alpha: float | None = None
    p: float | None = None
    mc_samples: int = 5000
    quad_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ground distance {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("renyi", "js_alpha_sqrt"):
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ValueError(f"{self.kind} requires alpha in (0, 1), got {self.alpha}")
        if self.kind == "wasserstein_1d_p":
            if self.p is None or self.p < 1:
                raise ValueError(f"wasserstein_1d_p requires p >= 1, got {self.p}")
        if self.mc_samples < 2:
            raise ValueError("mc_samples must be >= 2")
        if not self.quad_tol > 0:
            raise ValueError("quad_tol must be positive")

    @property
    def symmetric(self) -> bool:
        return self.kind in _SYMMETRIC

    @classmethod
    def parse(cls, text: str, **settings) -> "GroundDistanceSpec":
        """Parse the CLI grammar ``kl|tv|w2|w2sq|renyi:<a>|js:<a>|w1d:<p>``."""
        name, _, arg = text.partition(":")
        kind = _CLI_ALIASES.get(name, name)
        if kind not in KINDS:
            raise ValueError(f"unknown ground distance {text!r}")
        kw = dict(settings)
        if kind in ("renyi", "js_alpha_sqrt"):
            if not arg:
                raise ValueError(f"{name} needs an order, e.g. {name}:0.5")
            kw["alpha"] = float(arg)
        elif kind == "wasserstein_1d_p":
            kw["p"] = float(arg) if arg else 1.0
        elif arg:
            raise ValueError(f"{name} takes no argument")
        return cls(kind, **kw)

    def label(self) -> str:
        name = _CLI_NAMES.get(self.kind, self.kind)
        if self.kind in ("renyi", "js_alpha_sqrt"):
            return f"{name}:{self.alpha:g}"
        if self.kind == "wasserstein_1d_p":
            return f"{name}:{self.p:g}"
        return name

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("kind", "alpha", "p", "mc_samples", "quad_tol", "seed")}


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """``values[i, j] = D(rows[i], cols[j])`` under ``spec``."""

    values: np.ndarray
    spec: GroundDistanceSpec
    rows: tuple = field(repr=False)
    cols: tuple = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _pair(p: Component, q: Component) -> None:
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")


def _gauss_pair(p: Component, q: Component):
    if not (is_gaussian(p) and is_gaussian(q)):
        raise TypeError(f"closed form needs Gaussian components, got {p.family} and {q.family}")
    _pair(p, q)
    return gaussian_params(p) + gaussian_params(q)


def _same(p: Component, q: Component) -> bool:
    if p is q:
        return True
    if p.family != q.family:
        return False
    a, b = p.to_dict(), q.to_dict()
    return all(np.array_equal(a[k], b[k]) for k in a)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def kl_gaussian(p: Component, q: Component) -> float:
    """KL(p : q) between diagonal Gaussians."""
    m1, v1, m2, v2 = _gauss_pair(p, q)
    r = v1 / v2
    val = 0.5 * np.sum(r + (m1 - m2) ** 2 / v2 - 1.0 - np.log(r))
    return max(float(val), 0.0)


def w2_gaussian(p: Component, q: Component) -> float:
    """2-Wasserstein distance (not squared) between diagonal Gaussians."""
    m1, v1, m2, v2 = _gauss_pair(p, q)
    return float(np.sqrt(np.sum((m1 - m2) ** 2) + np.sum((np.sqrt(v1) - np.sqrt(v2)) ** 2)))


def w2_gaussian_full(mean1, cov1, mean2, cov2) -> float:
    """W2 between full-covariance Gaussians via symmetric eigendecompositions."""
    root1 = _psd_sqrt(cov1)
    cross = _psd_sqrt(root1 @ np.asarray(cov2) @ root1)
    d2 = np.sum((np.asarray(mean1) - np.asarray(mean2)) ** 2) + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(cross)
    return float(np.sqrt(max(d2, 0.0)))


def _psd_sqrt(a) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def _as_1d_gaussian(c: Component) -> tuple[float, float] | None:
    if isinstance(c, Gaussian1D):
        return c.mu, c.sigma
    if isinstance(c, GaussianDiag) and c.dim == 1:
        return float(c.mean[0]), float(np.sqrt(c.var[0]))
    return None


def tv_gaussian_1d(p: Component, q: Component) -> float:
    """Exact total variation between two univariate Gaussians.

    Equal scales reduce to ``erf(|dmu| / (2 sqrt(2) sigma))``; otherwise the
    two density crossings split the line and TV is a difference of CDFs.
    """
    a, b = _as_1d_gaussian(p), _as_1d_gaussian(q)
    if a is None or b is None:
        raise TypeError("tv_gaussian_1d needs univariate Gaussian components")
    # canonical argument order makes the result exactly symmetric
    (mu1, s1), (mu2, s2) = sorted([a, b], key=lambda t: (t[1], t[0]))
    if mu1 == mu2 and s1 == s2:
        return 0.0
    if s1 == s2:
        return float(special.erf(abs(mu1 - mu2) / (2.0 * np.sqrt(2.0) * s1)))
    # log p - log q = 0  <=>  A x^2 + B x + C = 0
    A = 1.0 / s2**2 - 1.0 / s1**2
    B = 2.0 * (mu1 / s1**2 - mu2 / s2**2)
    C = mu2**2 / s2**2 - mu1**2 / s1**2 + 2.0 * np.log(s2 / s1)
    disc = B * B - 4.0 * A * C
    sq = np.sqrt(max(disc, 0.0))
    t = -0.5 * (B + np.copysign(sq, B))
    roots = sorted([t / A, C / t] if t != 0 else [-sq / (2 * A), sq / (2 * A)])
    x1, x2 = roots

    def mass(mu, s):
        return special.ndtr((x2 - mu) / s) - special.ndtr((x1 - mu) / s)

    inner = mass(mu1, s1) - mass(mu2, s2)
    # the narrower density dominates between the crossings
    return float(np.clip(abs(inner), 0.0, 1.0))


def renyi_gaussian(p: Component, q: Component, alpha: float) -> float:
    """Renyi divergence ``1/(alpha-1) log int p^alpha q^(1-alpha)`` between diagonal Gaussians."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    m1, v1, m2, v2 = _gauss_pair(p, q)
    va = alpha * v2 + (1.0 - alpha) * v1
    quad = 0.5 * alpha * np.sum((m1 - m2) ** 2 / va)
    logdet = np.sum(np.log(va) - (1.0 - alpha) * np.log(v1) - alpha * np.log(v2))
    return max(float(quad + logdet / (2.0 * (1.0 - alpha))), 0.0)


# ---------------------------------------------------------------------------
# Numerical estimates
# ---------------------------------------------------------------------------


def _window(ms: list[Mixture]) -> tuple[tuple[float, float], tuple[float, float], list[float]]:
    lo = min(m.window()[0] for m in ms)
    hi = max(m.window()[1] for m in ms)
    sup_lo = min(c.support()[0] for m in ms for c in m.components)
    sup_hi = max(c.support()[1] for m in ms for c in m.components)
    breaks = sorted({b for m in ms for b in m.breakpoints()})
    return (lo, hi), (sup_lo, sup_hi), breaks


def _require_1d(*objs) -> list[Mixture]:
    ms = [as_mixture(o) for o in objs]
    if any(m.dim != 1 for m in ms):
        raise ValueError("numerical quadrature is only available for 1D inputs")
    return ms


def integrate_1d(fn, *objs, tol: float = 1e-8) -> float:
    """Integrate ``fn(x)`` over the joint support of 1D components/mixtures."""
    ms = _require_1d(*objs)
    window, support, breaks = _window(ms)
    return _quad.integrate_support(fn, window, support, breaks, tol)


def tv_numeric_1d(p, q, tol: float = 1e-8) -> float:
    """``0.5 * int |p - q|`` by adaptive quadrature (any 1D variant or mixture)."""
    mp, mq = _require_1d(p, q)
    if mp.k == 1 and mq.k == 1 and _same(mp.components[0], mq.components[0]):
        return 0.0

    def f(x):
        return abs(float(mp.pdf(x)) - float(mq.pdf(x)))

    return float(np.clip(0.5 * integrate_1d(f, mp, mq, tol=tol), 0.0, 1.0))


def kl_numeric_1d(p, q, tol: float = 1e-8) -> float:
    """``int p log(p/q)`` by adaptive quadrature."""
    mp, mq = _require_1d(p, q)

    def f(x):
        lp = float(mp.log_pdf(x))
        if lp == -np.inf:
            return 0.0
        return np.exp(lp) * (lp - float(mq.log_pdf(x)))

    return integrate_1d(f, mp, mq, tol=tol)


def _seeded(seed, *index) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, index)]))


def _batch_se(values: np.ndarray, batches: int) -> float:
    means = np.array([b.mean() for b in np.array_split(values, batches)])
    return float(means.std(ddof=1) / np.sqrt(batches))


def tv_mc(p, q, samples: int = 5000, seed: int = 0, batches: int = 10) -> tuple[float, float]:
    """Two-sample Monte Carlo total variation with batch-means standard error.

    Draws ``samples`` points from each side; each point contributes
    ``tanh(r / 2)`` with ``r = |log p - log q|``, i.e. ``|p - q| / (p + q)``,
    whose expectation under ``(p + q) / 2`` is the total variation.
    """
    mp, mq = as_mixture(p), as_mixture(q)
    if mp.dim != mq.dim:
        raise ValueError(f"dimension mismatch: {mp.dim} vs {mq.dim}")
    if samples < 2:
        raise ValueError("samples must be >= 2")
    rng = np.random.default_rng(seed)
    xs = mp.sample(samples, rng)
    ys = mq.sample(samples, rng)

    def term(z):
        r = np.abs(mp.log_pdf(z) - mq.log_pdf(z))
        return np.tanh(0.5 * np.nan_to_num(r, nan=0.0, posinf=np.inf))

    tx, ty = term(xs), term(ys)
    est = float(0.5 * (tx.mean() + ty.mean()))
    b = min(batches, samples)
    se = _batch_se(0.5 * (tx + ty), b)
    return min(max(est, 0.0), 1.0), se


def js_alpha_mc(p, q, alpha: float, samples: int = 5000, seed: int = 0, batches: int = 10) -> tuple[float, float]:
    """Monte Carlo JS_alpha with batch-means standard error.

    The ``samples`` draws from each of ``p`` and ``q`` are pooled into a
    stratified sample of ``r = (p + q)/2``.  The integrand divided by ``r`` is
    bounded, so no rare draw dominates the average.
    """
    _check_alpha(alpha)
    mp, mq = as_mixture(p), as_mixture(q)
    rng = np.random.default_rng(seed)
    xs = mp.sample(samples, rng)
    ys = mq.sample(samples, rng)
    la, lb = np.log1p(-alpha), np.log(alpha)

    def ratio(z):
        lp, lq = mp.log_pdf(z), mq.log_pdf(z)
        lmix = np.logaddexp(la + lp, lb + lq)
        lr = np.logaddexp(lp, lq) - np.log(2.0)
        with np.errstate(invalid="ignore"):
            tp = np.where(lp > -np.inf, np.exp(lp - lr) * (lp - lmix), 0.0)
            tq = np.where(lq > -np.inf, np.exp(lq - lr) * (lq - lmix), 0.0)
        return 0.5 * (tp + tq)

    t = 0.5 * (ratio(xs) + ratio(ys))
    return float(t.mean()), _batch_se(t, min(batches, samples))


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def js_alpha_cap(alpha: float) -> float:
    """``C_alpha = sqrt(-log(1-alpha)/2 - log(alpha)/2)``, the ceiling of sqrt(JS_alpha)."""
    _check_alpha(alpha)
    return float(np.sqrt(-0.5 * np.log1p(-alpha) - 0.5 * np.log(alpha)))


def js_alpha(p, q, alpha: float, spec: GroundDistanceSpec | None = None) -> float:
    """``JS_alpha = KL(p : m)/2 + KL(q : m)/2`` with ``m = (1-alpha) p + alpha q``.

    1D inputs are integrated by quadrature; multivariate ones use seeded
    Monte Carlo (see :func:`js_alpha_mc`).
    """
    _check_alpha(alpha)
    spec = spec or GroundDistanceSpec("js_alpha_sqrt", alpha=alpha)
    mp, mq = as_mixture(p), as_mixture(q)
    if mp.dim != mq.dim:
        raise ValueError(f"dimension mismatch: {mp.dim} vs {mq.dim}")
    if mp.k == 1 and mq.k == 1 and _same(mp.components[0], mq.components[0]):
        return 0.0
    if mp.dim > 1:
        val, _ = js_alpha_mc(mp, mq, alpha, spec.mc_samples, spec.seed)
        return min(max(val, 0.0), js_alpha_cap(alpha) ** 2)
    la, lb = np.log1p(-alpha), np.log(alpha)

    def f(x):
        lp, lq = float(mp.log_pdf(x)), float(mq.log_pdf(x))
        lmix = np.logaddexp(la + lp, lb + lq)
        out = 0.0
        if lp > -np.inf:
            out += np.exp(lp) * (lp - lmix)
        if lq > -np.inf:
            out += np.exp(lq) * (lq - lmix)
        return 0.5 * out

    val = integrate_1d(f, mp, mq, tol=spec.quad_tol)
    return min(max(val, 0.0), js_alpha_cap(alpha) ** 2)


def js_alpha_sqrt(p, q, alpha: float, spec: GroundDistanceSpec | None = None) -> float:
    return float(np.sqrt(js_alpha(p, q, alpha, spec)))


# ---------------------------------------------------------------------------
# 1D optimal transport through quantile functions
# ---------------------------------------------------------------------------


def _gl_nodes(panels: int = 16, order: int = 32) -> tuple[np.ndarray, np.ndarray]:
    # geometrically graded panels towards u=0 and u=1 where quantiles blow up
    inner = np.geomspace(1e-14, 0.5, panels)
    edges = np.unique(np.concatenate([[0.0], inner, 1.0 - inner[::-1], [1.0]]))
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x + 0.5 * (b + a)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


_GL_NODES = _gl_nodes()


def quantile(m, u, tol: float = 1e-12) -> np.ndarray:
    """Numeric inverse CDF of a 1D mixture/component by vectorised bisection."""
    (mm,) = _require_1d(m)
    u = np.asarray(u, dtype=float)
    lo, hi = mm.window(40.0)
    a = np.full(u.shape, lo)
    b = np.full(u.shape, hi)
    while mm.cdf(a).min() > u.min() and np.isfinite(a).all():
        a = a - (b - a)
    while mm.cdf(b).max() < u.max() and np.isfinite(b).all():
        b = b + (b - a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        below = mm.cdf(mid) < u
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
        if np.max(b - a) <= tol * max(1.0, np.max(np.abs(b))):
            break
    return 0.5 * (a + b)


def wasserstein_1d_quantile(p, q, p_order: float = 1.0, tol: float = 1e-12) -> float:
    """``(int_0^1 |F_p^-1(u) - F_q^-1(u)|^p du)^(1/p)`` by graded Gauss-Legendre in ``u``."""
    if p_order < 1:
        raise ValueError(f"p_order must be >= 1, got {p_order}")
    mp, mq = _require_1d(p, q)
    u, w = _GL_NODES
    diff = np.abs(quantile(mp, u, tol) - quantile(mq, u, tol))
    return float(np.sum(w * diff**p_order) ** (1.0 / p_order))


# ---------------------------------------------------------------------------
# Dispatch and cost matrices
# ---------------------------------------------------------------------------


def ground_distance(p: Component, q: Component, spec: GroundDistanceSpec, index=(0, 0)) -> float:
    """Evaluate ``spec`` on one component pair; ``index`` salts Monte Carlo seeds."""
    _pair(p, q)
    kind = spec.kind
    gauss = is_gaussian(p) and is_gaussian(q)
    if kind == "kl":
        if gauss:
            return kl_gaussian(p, q)
        if p.dim == 1:
            return kl_numeric_1d(p, q, spec.quad_tol)
        raise TypeError(f"no KL available between {p.family} components")
    if kind in ("w2", "w2_squared"):
        if gauss:
            d = w2_gaussian(p, q)
        elif p.dim == 1:
            d = wasserstein_1d_quantile(p, q, 2.0)
        else:
            raise TypeError(f"no W2 available between {p.family} components")
        return d * d if kind == "w2_squared" else d
    if kind == "tv":
        if _same(p, q):
            return 0.0
        if _as_1d_gaussian(p) is not None and _as_1d_gaussian(q) is not None:
            return tv_gaussian_1d(p, q)
        if p.dim == 1:
            return tv_numeric_1d(p, q, spec.quad_tol)
        est, _ = tv_mc(p, q, spec.mc_samples, seed=_seeded(spec.seed, *index).integers(2**63))
        return est
    if kind == "renyi":
        if gauss:
            return renyi_gaussian(p, q, spec.alpha)
        raise TypeError(f"no Renyi closed form between {p.family} components")
    if kind == "js_alpha_sqrt":
        sub = replace(spec, seed=int(_seeded(spec.seed, *index).integers(2**63)))
        return js_alpha_sqrt(p, q, spec.alpha, sub)
    if kind == "wasserstein_1d_p":
        return wasserstein_1d_quantile(p, q, spec.p)
    raise ValueError(kind)  # pragma: no cover


def cost_matrix(m1: Mixture, m2: Mixture, spec: GroundDistanceSpec) -> CostMatrix:
    """Pairwise ground distances ``M[i, j] = D(p_i, q_j)``.

    Monte Carlo entries draw from a generator seeded by ``(seed, i, j)`` so
    any entry can be recomputed on its own.
    """
    if m1.dim != m2.dim:
        raise ValueError(f"dimension mismatch: {m1.dim} vs {m2.dim}")
    M = np.empty((m1.k, m2.k))
    for i, p in enumerate(m1.components):
        for j, q in enumerate(m2.components):
            M[i, j] = ground_distance(p, q, spec, (i, j))
    if not np.all(np.isfinite(M)):
        raise FloatingPointError("non-finite ground distance in cost matrix")
    M = np.maximum(M, 0.0)
    return CostMatrix(M, spec, m1.components, m2.components)
