"""Upper and lower bounds on divergences between mixtures.

Covers the product-coupling and max bounds, log-sum / assignment bounds on
KL, the chi-square and exponential-family KL bounds, the f-divergence
derivative bound, and the Wasserstein moment / empirical bounds.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from . import _quad
from .distances import (
    CostMatrix,
    GroundDistanceSpec,
    cost_matrix,
    integrate_1d,
    js_alpha_cap,
    kl_gaussian,
    w2_gaussian_full,
)
from .mixture import Mixture, as_mixture, exp_family_view, gaussian_log_normalizer, is_gaussian, mixture_moments
from .transport import SinkhornConfig, crot, solve_assignment

__all__ = [
    "BoundRecord",
    "BoundReport",
    "ExpFamBound",
    "chi2_kl_bound",
    "crot_kl_bound",
    "empirical_w2_ub",
    "expfam_kl_bound",
    "fdiv_derivative_bound",
    "gelbrich_lb",
    "hungarian_bound",
    "js_alpha_cap",
    "kl_weights",
    "logsum_bound",
    "max_bound",
    "scub",
]

_SEPARATELY_CONVEX = {"kl", "tv", "renyi", "js_alpha_sqrt", "w2_squared"}


def _M(m1, m2, spec, M):
    return M if M is not None else cost_matrix(m1, m2, spec)


def scub(m1: Mixture, m2: Mixture, spec: GroundDistanceSpec, M: CostMatrix | None = None) -> float:
    """Product-coupling bound ``sum_ij a_i b_j D(p_i, q_j)``."""
    if spec.kind not in _SEPARATELY_CONVEX:
        raise ValueError(f"{spec.kind} is not separately convex")
    M = _M(m1, m2, spec, M)
    return float(m1.weights @ M.values @ m2.weights)


def max_bound(M) -> float:
    return float(np.max(M.values if isinstance(M, CostMatrix) else M))


def kl_weights(a, b) -> float:
    """Discrete KL ``sum a log(a/b)`` with ``0 log 0 = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pos = a > 0
    if np.any(b[pos] <= 0):
        return np.inf
    return float(np.sum(a[pos] * np.log(a[pos] / b[pos])))


def _kl_cost(m1: Mixture, m2: Mixture) -> np.ndarray:
    if m1.k != m2.k:
        raise ValueError(f"log-sum bounds need equal component counts, got {m1.k} and {m2.k}")
    a, b = m1.weights, m2.weights
    C = np.empty((m1.k, m2.k))
    for i, p in enumerate(m1.components):
        for j, q in enumerate(m2.components):
            C[i, j] = kl_weights([a[i]], [b[j]]) + a[i] * kl_gaussian(p, q)
    return C


def logsum_bound(m1: Mixture, m2: Mixture, perm=None) -> float:
    """``KL(a : b_perm) + sum_i a_i KL(p_i : q_perm(i))`` for a component matching ``perm``."""
    C = _kl_cost(m1, m2)
    perm = np.arange(m1.k) if perm is None else np.asarray(perm)
    if sorted(perm.tolist()) != list(range(m1.k)):
        raise ValueError("perm must be a permutation of range(k)")
    return float(C[np.arange(m1.k), perm].sum())


def _lexicographic_assignment(C: np.ndarray, best: float, tol: float) -> np.ndarray:
    k = C.shape[0]
    perm = np.empty(k, dtype=int)
    free = list(range(k))
    fixed = 0.0
    for i in range(k):
        for j in free:
            rest = [c for c in free if c != j]
            sub = C[np.ix_(range(i + 1, k), rest)]
            if sub.size:
                r, c = linear_sum_assignment(sub)
                tail = sub[r, c].sum()
            else:
                tail = 0.0
            if fixed + C[i, j] + tail <= best + tol:
                perm[i] = j
                fixed += C[i, j]
                free.remove(j)
                break
    return perm


def hungarian_bound(m1: Mixture, m2: Mixture, lexicographic_limit: int = 50) -> tuple[float, np.ndarray]:
    """Tightest log-sum bound over component permutations.

    Solved as a linear assignment with ``c_ij = a_i log(a_i/b_j) + a_i KL(p_i : q_j)``.
    For ``k <= lexicographic_limit`` the lexicographically smallest optimal
    permutation is returned.
    """
    C = _kl_cost(m1, m2)
    if not np.all(np.isfinite(C)):
        return np.inf, np.arange(m1.k)
    rows, cols = linear_sum_assignment(C)
    best = float(C[rows, cols].sum())
    perm = cols
    if m1.k <= lexicographic_limit:
        perm = _lexicographic_assignment(C, best, 1e-12 * max(1.0, abs(best)))
    return float(C[np.arange(m1.k), perm].sum()), perm


def crot_kl_bound(m1: Mixture, m2: Mixture, solver: str | SinkhornConfig = "exact", M: CostMatrix | None = None) -> float:
    """CROT with KL ground distance, an upper bound on KL(m1 : m2) by joint convexity."""
    value, _, _ = crot(m1, m2, GroundDistanceSpec("kl"), solver, M)
    return value


# ---------------------------------------------------------------------------
# Chi-square style bounds
# ---------------------------------------------------------------------------


def chi2_kl_bound(p, q, tol: float = 1e-8) -> float:
    """``int p^2 / q - 1``, an upper bound on KL(p : q); ``inf`` when it diverges.

    1D inputs are integrated adaptively.  A pair of single Gaussians in any
    dimension uses the exact exponential-family expression.
    """
    mp, mq = as_mixture(p), as_mixture(q)
    if mp.dim != mq.dim:
        raise ValueError(f"dimension mismatch: {mp.dim} vs {mq.dim}")
    if mp.dim == 1:

        def f(x):
            lp = float(mp.log_pdf(x))
            if lp == -np.inf:
                return 0.0
            with np.errstate(over="ignore"):
                return np.exp(2.0 * lp - float(mq.log_pdf(x)))

        try:
            val = integrate_1d(f, mp, mq, tol=tol)
        except _quad.DivergentIntegral:
            return np.inf
        return max(val - 1.0, 0.0)
    if mp.k == 1 and mq.k == 1 and is_gaussian(mp.components[0]):
        bound = expfam_kl_bound(mp, mq)
        return bound.value
    raise ValueError("chi2_kl_bound needs 1D inputs or a pair of single Gaussians")


class ExpFamBound(NamedTuple):
    value: float
    in_domain: bool


def expfam_kl_bound(m: Mixture, m_prime: Mixture) -> ExpFamBound:
    """Closed-form KL bound for mixtures within one exponential family.

    Replaces the denominator mixture by its weighted geometric mean, whose
    natural parameter is the barycenter ``theta_bar`` of the components.
    When some ``theta_i + theta_j - theta_bar`` leaves the natural domain the
    bound is ``inf`` and ``in_domain`` is False.
    """
    m, m_prime = as_mixture(m), as_mixture(m_prime)
    thetas = np.stack([exp_family_view(c).theta for c in m.components])
    primes = np.stack([exp_family_view(c).theta for c in m_prime.components])
    F = gaussian_log_normalizer
    bar = m_prime.weights @ primes
    shift = float(m_prime.weights @ np.array([F(t) for t in primes]))
    Fi = np.array([F(t) for t in thetas])
    logw = np.log(np.where(m.weights > 0, m.weights, 1.0))
    terms = []
    for i in range(m.k):
        for j in range(m.k):
            if m.weights[i] == 0 or m.weights[j] == 0:
                continue
            eta = thetas[i] + thetas[j] - bar
            try:
                Feta = F(eta)
            except ValueError:
                return ExpFamBound(np.inf, False)
            terms.append(logw[i] + logw[j] + Feta - Fi[i] - Fi[j] + shift)
    total = logsumexp(terms)
    if total > 700:
        return ExpFamBound(np.inf, True)
    return ExpFamBound(max(float(np.expm1(total)), 0.0), True)


def fdiv_derivative_bound(p, q, f: Callable, fprime: Callable, tol: float = 1e-8) -> float:
    """``int (q - p) f'(q / p)``, an upper bound on the f-divergence ``int p f(q/p)``.

    ``f`` is accepted for symmetry with the divergence it bounds; only the
    derivative enters the integral.  Returns ``inf`` if the integral diverges.
    """
    mp, mq = as_mixture(p), as_mixture(q)

    def g(x):
        lp, lq = float(mp.log_pdf(x)), float(mq.log_pdf(x))
        if lp == -np.inf and lq == -np.inf:
            return 0.0
        if lp == -np.inf:
            raise ValueError("generator ratio q/p is undefined where p vanishes")
        with np.errstate(over="ignore", divide="ignore"):
            ratio = np.exp(lq - lp)
            d = fprime(ratio)
        if np.isnan(d):
            raise ValueError(f"f'({ratio!r}) is undefined")
        diff = np.exp(lq) - np.exp(lp)
        if diff == 0.0:
            return 0.0
        return diff * d

    try:
        return integrate_1d(g, mp, mq, tol=tol)
    except _quad.DivergentIntegral:
        return np.inf


# ---------------------------------------------------------------------------
# Wasserstein bounds
# ---------------------------------------------------------------------------


def gelbrich_lb(m1: Mixture, m2: Mixture) -> float:
    """W2 between the moment-matched Gaussians, a lower bound on W2(m1, m2)."""
    mu1, c1 = mixture_moments(m1)
    mu2, c2 = mixture_moments(m2)
    return w2_gaussian_full(mu1, c1, mu2, c2)


def empirical_w2_ub(
    m1: Mixture,
    m2: Mixture,
    n: int = 1000,
    p_order: float = 2.0,
    rng: np.random.Generator | None = None,
    replicates: int = 1,
) -> tuple[float, float]:
    """Wasserstein-p between two ``n``-point samples, averaged over ``replicates``.

    Each replicate solves the exact uniform ``n x n`` transport, which is an
    assignment problem.  The standard error is ``nan`` for a single replicate.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = rng if rng is not None else np.random.default_rng(0)
    vals = []
    for _ in range(replicates):
        x = m1.sample(n, rng)
        y = m2.sample(n, rng)
        C = cdist(x, y) ** p_order
        vals.append(solve_assignment(C).value ** (1.0 / p_order))
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / np.sqrt(replicates)) if replicates > 1 else float("nan")
    return float(vals.mean()), se


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class BoundRecord:
    name: str
    value: float
    side: str
    seconds: float

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "side": self.side, "seconds": self.seconds}


@dataclass
class BoundReport:
    """All bounds computed for one divergence between one mixture pair."""

    target: str
    records: list[BoundRecord] = field(default_factory=list)
    reference: tuple[float, float] | None = None

    def add(self, name: str, side: str, fn: Callable[[], float]) -> float:
        t0 = time.perf_counter()
        value = float(fn())
        self.records.append(BoundRecord(name, value, side, time.perf_counter() - t0))
        return value

    def value(self, name: str) -> float:
        for r in self.records:
            if r.name == name:
                return r.value
        raise KeyError(name)

    def consistent(self, slack: float = 1e-9) -> bool:
        uppers = [r.value for r in self.records if r.side == "upper"]
        lowers = [r.value for r in self.records if r.side == "lower"]
        if not uppers or not lowers:
            return True
        return min(uppers) >= max(lowers) - slack

    def to_dict(self) -> dict:
        d = {"target": self.target, "bounds": [r.to_dict() for r in self.records]}
        if self.reference is not None:
            d["reference"] = {"estimate": self.reference[0], "stderr": self.reference[1]}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BoundReport":
        for key in ("target", "bounds"):
            if key not in d:
                raise ValueError(f"bound report field {key!r} is missing")
        records = []
        for i, r in enumerate(d["bounds"]):
            missing = {"name", "value", "side", "seconds"} - set(r)
            if missing:
                raise ValueError(f"bound report field 'bounds[{i}]' lacks {sorted(missing)}")
            if r["side"] not in ("upper", "lower"):
                raise ValueError(f"bound report field 'bounds[{i}].side' must be 'upper' or 'lower'")
            records.append(BoundRecord(str(r["name"]), float(r["value"]), r["side"], float(r["seconds"])))
        ref = d.get("reference")
        reference = None if ref is None else (float(ref["estimate"]), float(ref["stderr"]))
        return cls(str(d["target"]), records, reference)


def brute_force_logsum(m1: Mixture, m2: Mixture) -> float:
    """Minimum log-sum bound by enumerating every permutation (small ``k`` only)."""
    C = _kl_cost(m1, m2)
    return float(min(C[np.arange(m1.k), list(s)].sum() for s in itertools.permutations(range(m1.k))))
