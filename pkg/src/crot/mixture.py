"""Parametric components, finite mixtures and kernel density estimators.

Points are numpy arrays.  A ``d``-dimensional component evaluates arrays of
shape ``(..., d)``; one-dimensional components (``d == 1``) also accept bare
scalars or flat arrays, in which case the trailing axis is implicit.
Sampling always returns an ``(n, d)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, ClassVar, Sequence, Union

import numpy as np
from scipy import special

VARIANCE_FLOOR = 1e-12
LOG_2PI = np.log(2.0 * np.pi)


def _points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to ``(..., dim)``; 1D inputs may omit the trailing axis."""
    x = np.asarray(x, dtype=float)
    if dim == 1:
        if x.ndim == 0 or x.shape[-1] != 1:
            x = x[..., None]
        return x
    if x.ndim == 0 or x.shape[-1] != dim:
        raise ValueError(f"point dimension mismatch: expected trailing axis {dim}, got shape {x.shape}")
    return x


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_positive(name: str, value, floor: float = VARIANCE_FLOOR) -> None:
    v = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    if np.any(v < floor):
        raise ValueError(f"{name} must be >= {floor:g}, got {value}")


# ---------------------------------------------------------------------------
# Components
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianDiag:
    """Multivariate normal with diagonal covariance ``diag(var)``."""

    mean: np.ndarray
    var: np.ndarray
    family: ClassVar[str] = "gaussian_diag"

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        var = np.atleast_1d(np.asarray(self.var, dtype=float))
        if mean.ndim != 1 or var.shape != mean.shape or mean.size == 0:
            raise ValueError(f"mean and var must be equal-length vectors, got {mean.shape} and {var.shape}")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean must be finite")
        _check_positive("var", var)
        object.__setattr__(self, "mean", _readonly(mean))
        object.__setattr__(self, "var", _readonly(var))

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_pdf(self, x) -> np.ndarray:
        x = _points(x, self.dim)
        z = (x - self.mean) ** 2 / self.var
        return -0.5 * (np.sum(z, axis=-1) + np.sum(np.log(self.var)) + self.dim * LOG_2PI)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + np.sqrt(self.var) * rng.standard_normal((n, self.dim))

    def cdf(self, x) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("cdf is only defined for 1D components")
        return special.ndtr((np.asarray(x, dtype=float) - self.mean[0]) / np.sqrt(self.var[0]))

    def entropy(self) -> float:
        return 0.5 * float(np.sum(np.log(self.var)) + self.dim * (LOG_2PI + 1.0))

    def support(self) -> tuple[float, float]:
        return -np.inf, np.inf

    def window(self, width: float = 12.0) -> tuple[float, float]:
        s = np.sqrt(self.var[0])
        return self.mean[0] - width * s, self.mean[0] + width * s

    def breakpoints(self) -> list[float]:
        s = np.sqrt(self.var[0])
        return [self.mean[0] + t * s for t in (-6, -3, -1, 0, 1, 3, 6)]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist()}


@dataclass(frozen=True, eq=False)
class Gaussian1D:
    """Univariate normal ``N(mu, sigma**2)``; ``sigma`` is the standard deviation."""

    mu: float
    sigma: float
    family: ClassVar[str] = "gaussian_1d"
    dim: ClassVar[int] = 1

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        _check_positive("sigma**2", float(self.sigma) ** 2)
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.mu])

    @property
    def var(self) -> np.ndarray:
        return np.array([self.sigma**2])

    def log_pdf(self, x) -> np.ndarray:
        x = _points(x, 1)[..., 0]
        z = (x - self.mu) / self.sigma
        return -0.5 * (z * z + LOG_2PI) - np.log(self.sigma)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return (self.mu + self.sigma * rng.standard_normal(n))[:, None]

    def cdf(self, x) -> np.ndarray:
        return special.ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def entropy(self) -> float:
        return 0.5 * (LOG_2PI + 1.0) + np.log(self.sigma)

    def support(self) -> tuple[float, float]:
        return -np.inf, np.inf

    def window(self, width: float = 12.0) -> tuple[float, float]:
        return self.mu - width * self.sigma, self.mu + width * self.sigma

    def breakpoints(self) -> list[float]:
        return [self.mu + t * self.sigma for t in (-6, -3, -1, 0, 1, 3, 6)]

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class Gamma:
    """Gamma distribution with shape ``k`` and scale ``theta``."""

    shape: float
    scale: float
    family: ClassVar[str] = "gamma"
    dim: ClassVar[int] = 1

    def __post_init__(self):
        _check_positive("shape", self.shape)
        _check_positive("scale", self.scale)
        object.__setattr__(self, "shape", float(self.shape))
        object.__setattr__(self, "scale", float(self.scale))

    def log_pdf(self, x) -> np.ndarray:
        x = _points(x, 1)[..., 0]
        k, t = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (k - 1.0) * np.log(x) - x / t - special.gammaln(k) - k * np.log(t)
        return np.where(x > 0, out, -np.inf)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.gamma(self.shape, self.scale, size=n)[:, None]

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return special.gammainc(self.shape, np.maximum(x, 0.0) / self.scale)

    def support(self) -> tuple[float, float]:
        return 0.0, np.inf

    def window(self, width: float = 12.0) -> tuple[float, float]:
        # upper tail mass below ~1e-15
        return 0.0, self.scale * special.gammainccinv(self.shape, 1e-15)

    def breakpoints(self) -> list[float]:
        qs = (1e-6, 0.01, 0.1, 0.5, 0.9, 0.99, 1 - 1e-6)
        return [self.scale * special.gammaincinv(self.shape, q) for q in qs]

    def to_dict(self) -> dict:
        return {"shape": self.shape, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class Rayleigh:
    """Rayleigh distribution with scale ``sigma``."""

    scale: float
    family: ClassVar[str] = "rayleigh"
    dim: ClassVar[int] = 1

    def __post_init__(self):
        _check_positive("scale", self.scale)
        object.__setattr__(self, "scale", float(self.scale))

    def log_pdf(self, x) -> np.ndarray:
        x = _points(x, 1)[..., 0]
        s2 = self.scale**2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(x) - np.log(s2) - x * x / (2.0 * s2)
        return np.where(x > 0, out, -np.inf)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.rayleigh(self.scale, size=n)[:, None]

    def cdf(self, x) -> np.ndarray:
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-x * x / (2.0 * self.scale**2))

    def support(self) -> tuple[float, float]:
        return 0.0, np.inf

    def window(self, width: float = 12.0) -> tuple[float, float]:
        return 0.0, self.scale * np.sqrt(2.0 * 35.0 * np.log(10.0))

    def breakpoints(self) -> list[float]:
        return [self.scale * t for t in (0.01, 0.5, 1.0, 2.0, 4.0)]

    def to_dict(self) -> dict:
        return {"scale": self.scale}


Component = Union[GaussianDiag, Gaussian1D, Gamma, Rayleigh]

FAMILIES: dict[str, type] = {
    cls.family: cls for cls in (GaussianDiag, Gaussian1D, Gamma, Rayleigh)
}


def is_gaussian(c: Component) -> bool:
    return isinstance(c, (GaussianDiag, Gaussian1D))


def gaussian_params(c: Component) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance vectors of a Gaussian component (either variant)."""
    if not is_gaussian(c):
        raise TypeError(f"expected a Gaussian component, got {c.family}")
    return np.asarray(c.mean, dtype=float), np.asarray(c.var, dtype=float)


def component_from_dict(family: str, d: dict) -> Component:
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}") from None
    try:
        return cls(**d)
    except TypeError as exc:
        raise ValueError(f"bad {family} component fields {sorted(d)}: {exc}") from None


# ---------------------------------------------------------------------------
# Mixtures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Mixture:
    """Finite mixture ``sum_i weights[i] * components[i]``.

    All components share one family and dimension.  Weight vectors that sum
    to one within 1e-6 are renormalized; larger deviations are rejected.
    """

    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if len(comps) == 0:
            raise ValueError("a mixture needs at least one component")
        if w.ndim != 1 or w.size != len(comps):
            raise ValueError(f"weights has {w.size} entries for {len(comps)} components")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and non-negative")
        total = w.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1 (got {total:.12g})")
        families = {c.family for c in comps}
        if len(families) != 1:
            raise ValueError(f"components must share one family, got {sorted(families)}")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ValueError(f"components must share one dimension, got {sorted(dims)}")
        if abs(total - 1.0) > 1e-12:
            w = w / total
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "components", comps)

    @classmethod
    def single(cls, component: Component) -> "Mixture":
        return cls(np.ones(1), (component,))

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def family(self) -> str:
        return self.components[0].family

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @cached_property
    def _gauss_stack(self) -> tuple[np.ndarray, np.ndarray]:
        means = np.stack([np.atleast_1d(c.mean) for c in self.components])
        var = np.stack([np.atleast_1d(c.var) for c in self.components])
        return means, var

    def component_log_pdf(self, x) -> np.ndarray:
        """Matrix of ``log p_i(x)`` with shape ``x.shape[:-1] + (k,)``."""
        x = _points(x, self.dim)
        if not is_gaussian(self.components[0]):
            return np.stack([c.log_pdf(x) for c in self.components], axis=-1)
        means, var = self._gauss_stack
        lead = x.shape[:-1]
        flat = x.reshape(-1, self.dim)
        inv = 1.0 / var
        const = -0.5 * (np.sum(np.log(var), axis=1) + self.dim * LOG_2PI + np.sum(means**2 * inv, axis=1))
        out = np.empty((flat.shape[0], self.k))
        step = max(1, 2_000_000 // max(self.k, 1))
        for s in range(0, flat.shape[0], step):
            xs = flat[s : s + step]
            quad = (xs**2) @ inv.T - 2.0 * xs @ (means * inv).T
            out[s : s + step] = const - 0.5 * quad
        return out.reshape(lead + (self.k,))

    def log_pdf(self, x) -> np.ndarray:
        """``log m(x)`` by log-sum-exp over components; ``-inf`` off-support."""
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return special.logsumexp(self.component_log_pdf(x) + logw, axis=-1)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.log_pdf(x))

    def cdf(self, x) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("cdf is only defined for 1D mixtures")
        x = np.asarray(x, dtype=float)
        return sum(w * c.cdf(x) for w, c in zip(self.weights, self.components))

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Ancestral sampling: component index from ``weights`` then a draw from it."""
        if count < 1:
            raise ValueError("count must be >= 1")
        idx = rng.choice(self.k, size=count, p=self.weights)
        if is_gaussian(self.components[0]):
            means, var = self._gauss_stack
            return means[idx] + np.sqrt(var[idx]) * rng.standard_normal((count, self.dim))
        out = np.empty((count, self.dim))
        for j in np.unique(idx):
            sel = idx == j
            out[sel] = self.components[j].sample(int(sel.sum()), rng)
        return out

    def window(self, width: float = 12.0) -> tuple[float, float]:
        lo, hi = zip(*(c.window(width) for c in self.components))
        return min(lo), max(hi)

    def breakpoints(self) -> list[float]:
        return sorted({b for c in self.components for b in c.breakpoints()})

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "weights": self.weights.tolist(),
            "components": [c.to_dict() for c in self.components],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mixture":
        for key in ("family", "weights", "components"):
            if key not in d:
                raise ValueError(f"mixture field {key!r} is missing")
        comps = tuple(component_from_dict(d["family"], c) for c in d["components"])
        try:
            return cls(d["weights"], comps)
        except ValueError as exc:
            raise ValueError(f"mixture field 'weights': {exc}") from None


def as_mixture(obj) -> Mixture:
    return obj if isinstance(obj, Mixture) else Mixture.single(obj)


def gaussian_mixture(weights, means, variances) -> Mixture:
    """Diagonal-Gaussian mixture from stacked ``(k, d)`` parameter arrays."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    variances = np.atleast_2d(np.asarray(variances, dtype=float))
    return Mixture(weights, tuple(GaussianDiag(m, v) for m, v in zip(means, variances)))


def mixture_moments(m: Mixture) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean vector and covariance matrix of a Gaussian mixture."""
    if not is_gaussian(m.components[0]):
        raise TypeError(f"moments are implemented for Gaussian mixtures, not {m.family}")
    means, var = m._gauss_stack
    w = m.weights
    mu = w @ means
    second = np.einsum("k,ki,kj->ij", w, means, means) + np.diag(w @ var)
    cov = second - np.outer(mu, mu)
    cov = 0.5 * (cov + cov.T)
    return mu, cov


# ---------------------------------------------------------------------------
# Kernel density estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Kde(Mixture):
    """Uniform-weight mixture of ``N(x_i, bandwidth * I)`` kernels."""

    bandwidth: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def n(self) -> int:
        return self.k

    @property
    def points(self) -> np.ndarray:
        return self._gauss_stack[0]

    def kernel_entropy(self) -> float:
        """Shannon entropy of a single kernel ``N(x_i, bandwidth * I)``."""
        return 0.5 * self.dim * (LOG_2PI + 1.0 + np.log(self.bandwidth))


def kde_build(points, eps: float) -> Kde:
    """KDE with one ``N(x_i, eps I)`` kernel per point and weights ``1/n``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("kde_build needs a non-empty (n, d) point set")
    if not eps > 0:
        raise ValueError(f"bandwidth must be positive, got {eps}")
    n, d = pts.shape
    var = np.full(d, float(eps))
    comps = tuple(GaussianDiag(x, var) for x in pts)
    return Kde(np.full(n, 1.0 / n), comps, bandwidth=float(eps))


# ---------------------------------------------------------------------------
# Exponential-family view
# ---------------------------------------------------------------------------


def _gaussian_log_normalizer(theta) -> float:
    theta = np.asarray(theta, dtype=float)
    d = theta.size // 2
    t1, t2 = theta[:d], theta[d:]
    if theta.size != 2 * d or np.any(~(t2 < 0)):
        raise ValueError("natural parameter outside the Gaussian domain (need theta2 < 0)")
    return float(np.sum(-t1 * t1 / (4.0 * t2) + 0.5 * np.log(np.pi / -t2)))


@dataclass(frozen=True, eq=False)
class ExpFamilyView:
    """Natural parameters of a Gaussian under sufficient statistics ``(x, x**2)``.

    ``theta`` stacks the linear coefficients of every dimension followed by
    the quadratic ones, so ``N(0, 1)`` maps to ``(0, -1/2)``.
    """

    theta: np.ndarray
    log_normalizer: Callable[[np.ndarray], float] = field(repr=False)
    family: str = "gaussian_diag"

    @property
    def logF(self) -> float:
        return self.log_normalizer(self.theta)

    def log_density(self, x) -> np.ndarray:
        d = self.theta.size // 2
        x = _points(x, d)
        return x @ self.theta[:d] + (x * x) @ self.theta[d:] - self.logF

    def to_component(self) -> Component:
        d = self.theta.size // 2
        t1, t2 = self.theta[:d], self.theta[d:]
        var = -0.5 / t2
        mean = t1 * var
        if self.family == "gaussian_1d":
            return Gaussian1D(mean[0], np.sqrt(var[0]))
        return GaussianDiag(mean, var)


def exp_family_view(c: Component) -> ExpFamilyView:
    if not is_gaussian(c):
        raise TypeError(f"no exponential-family view implemented for {c.family}")
    mean, var = gaussian_params(c)
    theta = np.concatenate([mean / var, -0.5 / var])
    return ExpFamilyView(_readonly(theta), _gaussian_log_normalizer, c.family)


def gaussian_log_normalizer(theta) -> float:
    """Log-normalizer ``F`` of the diagonal Gaussian family; errors outside its domain."""
    return _gaussian_log_normalizer(theta)


def stack_components(components: Sequence[Component]) -> tuple[np.ndarray, np.ndarray]:
    means = np.stack([np.atleast_1d(gaussian_params(c)[0]) for c in components])
    var = np.stack([np.atleast_1d(gaussian_params(c)[1]) for c in components])
    return means, var
