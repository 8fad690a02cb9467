"""Diagonal GMM learning: SCROT.KL simplification of a KDE, EM baseline, PCA.

The SCROT.KL learner replaces the entropic transport between a KDE and a
GMM by its column-free relaxation.  There each kernel's coupling row is a
softmin of its KL costs, so no Sinkhorn iterations are needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .estimators import McConfig, kl_eval_bound
from .mixture import Kde, Mixture, gaussian_mixture, kde_build

__all__ = [
    "LearnConfig",
    "LearnState",
    "fit_em",
    "fit_scrot",
    "kl_matrix",
    "pca_fit_transform",
    "scrot_kl_objective",
    "softmin_weights",
]


@dataclass(frozen=True)
class LearnConfig:
    """Settings for :func:`fit_scrot`.

    ``lam`` is the softmin sharpness in inverse nats, ``bandwidth`` the KDE
    kernel variance, ``batch_size`` the minibatch size ``n'``.
    """

    components: int = 10
    lam: float = 0.005
    bandwidth: float = 1e-6
    batch_size: int = 256
    epochs: int = 100
    step_size: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    var_floor: float = 1e-8
    full_gradient: bool = False
    eval_samples: int = 2000

    def __post_init__(self):
        if self.components < 1:
            raise ValueError("components must be >= 1")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.var_floor > 0:
            raise ValueError("var_floor must be positive")


@dataclass
class LearnState:
    """Learned GMM plus its per-epoch trajectory.

    ``trajectory`` holds one dict per epoch with keys ``epoch``,
    ``objective`` (mean minibatch objective), ``test_objective`` (objective
    against the test KDE, when one is given) and ``kl_eval``.
    """

    gmm: Mixture
    trajectory: list[dict] = field(default_factory=list)
    epoch: int = 0
    aborted: bool = False
    history: list[Mixture] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def _kernel_arrays(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, Mixture):
        means, var = batch._gauss_stack
        return means, var
    X, eps = batch
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X, np.broadcast_to(np.asarray(eps, dtype=float), X.shape)


def _gmm_arrays(gmm: Mixture) -> tuple[np.ndarray, np.ndarray]:
    means, var = gmm._gauss_stack
    return means, var


def kl_matrix(X, kvar, mu, var) -> np.ndarray:
    """``K[i, j] = KL(N(X_i, kvar_i) : N(mu_j, var_j))`` for diagonal Gaussians."""
    inv = 1.0 / var
    quad = (X**2 + kvar) @ inv.T - 2.0 * X @ (mu * inv).T + np.sum(mu**2 * inv, axis=1)[None, :]
    logdet = np.sum(np.log(var), axis=1)[None, :] - np.sum(np.log(kvar), axis=1)[:, None]
    return 0.5 * (quad + logdet - X.shape[1])


def _softmin(K: np.ndarray, lam: float) -> np.ndarray:
    n = K.shape[0]
    logits = -lam * K
    logits -= logsumexp(logits, axis=1, keepdims=True)
    return np.exp(logits) / n


def softmin_weights(batch, gmm: Mixture, lam: float) -> np.ndarray:
    """Coupling rows ``w[i, j] = softmax_j(-lam * KL(p_i : q_j)) / n``.

    ``batch`` is a :class:`Kde` or a pair ``(points, bandwidth)``.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    X, kvar = _kernel_arrays(batch)
    mu, var = _gmm_arrays(gmm)
    return _softmin(kl_matrix(X, kvar, mu, var), lam)


def _objective(X, kvar, mu, log_var, lam, full=False, W=None):
    var = np.exp(log_var)
    K = kl_matrix(X, kvar, mu, var)
    if W is None:
        W = _softmin(K, lam)
    value = float(np.sum(W * K))
    G = W
    if full:
        n = K.shape[0]
        Kbar = n * np.sum(W * K, axis=1, keepdims=True)
        G = W * (1.0 - lam * (K - Kbar))
    col = G.sum(0)[:, None]
    inv = 1.0 / var
    g_mu = (col * mu - G.T @ X) * inv
    # d KL / d log v = (1 - (kvar + (x - mu)^2) / v) / 2
    second = G.T @ (X**2 + kvar) - 2.0 * mu * (G.T @ X) + col * mu**2
    g_lv = 0.5 * (col - second * inv)
    return value, g_mu, g_lv, W


def scrot_kl_objective(batch, gmm: Mixture, lam: float, full: bool = False, weights=None):
    """SCROT.KL objective ``sum_ij w_ij KL(p_i : q_j)`` and its gradients.

    Parameters
    ----------
    batch : Kde or (points, bandwidth)
        Kernels ``p_i``.
    gmm : Mixture
        Diagonal Gaussian mixture ``q``.
    lam : float
        Softmin sharpness.
    full : bool
        Differentiate through the softmin.  By default the weights are held
        fixed (stop-gradient).
    weights : array, optional
        Use this coupling instead of the softmin one.

    Returns
    -------
    value : float
    grads : dict
        ``mean`` and ``log_var`` gradients with shape ``(m, d)``, and a zero
        ``weights`` gradient since the mixture weights do not enter the objective.
    """
    X, kvar = _kernel_arrays(batch)
    mu, var = _gmm_arrays(gmm)
    value, g_mu, g_lv, _ = _objective(X, kvar, mu, np.log(var), lam, full and weights is None, weights)
    return value, {"mean": g_mu, "log_var": g_lv, "weights": np.zeros(gmm.k)}


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _farthest_points(X: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    idx = [int(rng.integers(X.shape[0]))]
    d2 = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(1, m):
        nxt = int(np.argmax(d2))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[idx].copy()


def _data(data) -> np.ndarray:
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("data must be a non-empty (n, d) array")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite values")
    return X


def _column_mass(X, kvar_row, mu, var, lam, chunk=4096) -> np.ndarray:
    n = X.shape[0]
    mass = np.zeros(mu.shape[0])
    for s in range(0, n, chunk):
        xs = X[s : s + chunk]
        K = kl_matrix(xs, np.broadcast_to(kvar_row, xs.shape), mu, var)
        mass += softmax(-lam * K, axis=1).sum(0)
    return mass / n


def fit_scrot(data, cfg: LearnConfig = LearnConfig(), test=None, keep_history: bool = False) -> LearnState:
    """Fit a diagonal GMM to ``data`` by minimizing the SCROT.KL objective.

    Each epoch visits shuffled minibatches, recomputes the softmin coupling
    from the current parameters, and takes an Adam step on the means and
    log-variances.  Mixture weights are then set to the coupling's column
    mass over the training data.  With ``test`` points, each epoch also logs
    the objective against the test KDE and the entropy-bound KL estimate.
    """
    X = _data(data)
    n, d = X.shape
    m = cfg.components
    if m > n:
        raise ValueError(f"cannot place {m} components on {n} points")
    rng = np.random.default_rng(cfg.seed)
    kvar_row = np.full(d, cfg.bandwidth)
    mu = _farthest_points(X, m, rng)
    log_var = np.tile(np.log(np.maximum(X.var(0), cfg.var_floor)), (m, 1))
    alpha = np.full(m, 1.0 / m)
    log_floor = np.log(cfg.var_floor)
    test_kde = None
    if test is not None:
        T = _data(test)
        if T.shape[1] != d:
            raise ValueError("test data dimension differs from training data")
        test_kde = kde_build(T, cfg.bandwidth)
    mc = McConfig(samples=cfg.eval_samples, seed=cfg.seed)

    params = [mu, log_var]
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    step = 0
    state = LearnState(gaussian_mixture(alpha, mu, np.exp(log_var)))
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        values = []
        last = (mu.copy(), log_var.copy())
        bad = False
        for s in range(0, n, cfg.batch_size):
            xb = X[order[s : s + cfg.batch_size]]
            kb = np.broadcast_to(kvar_row, xb.shape)
            value, g_mu, g_lv, _ = _objective(xb, kb, mu, log_var, cfg.lam, cfg.full_gradient)
            if not (np.isfinite(value) and np.all(np.isfinite(g_mu)) and np.all(np.isfinite(g_lv))):
                bad = True
                break
            values.append(value)
            step += 1
            for p, g, a1, a2 in zip(params, (g_mu, g_lv), m1, m2):
                a1 *= cfg.beta1
                a1 += (1 - cfg.beta1) * g
                a2 *= cfg.beta2
                a2 += (1 - cfg.beta2) * g**2
                p -= cfg.step_size * (a1 / (1 - cfg.beta1**step)) / (np.sqrt(a2 / (1 - cfg.beta2**step)) + cfg.adam_eps)
            np.maximum(log_var, log_floor, out=log_var)
        if bad:
            mu[...], log_var[...] = last
            state.aborted = True
            break
        alpha = _column_mass(X, kvar_row, mu, np.exp(log_var), cfg.lam)
        gmm = gaussian_mixture(alpha, mu, np.exp(log_var))
        row = {"epoch": epoch, "objective": float(np.mean(values))}
        if test_kde is not None:
            row["test_objective"] = scrot_kl_objective(test_kde, gmm, cfg.lam)[0]
            row["kl_eval"] = kl_eval_bound(test_kde, gmm, mc)[0]
        state.gmm = gmm
        state.epoch = epoch
        state.trajectory.append(row)
        if keep_history:
            state.history.append(gmm)
    return state


# ---------------------------------------------------------------------------
# EM baseline
# ---------------------------------------------------------------------------


def _log_resp(X, alpha, mu, var):
    inv = 1.0 / var
    quad = (X**2) @ inv.T - 2.0 * X @ (mu * inv).T + np.sum(mu**2 * inv, axis=1)[None, :]
    with np.errstate(divide="ignore"):
        logw = np.log(alpha)
    logp = -0.5 * (quad + np.sum(np.log(var), axis=1)[None, :] + X.shape[1] * np.log(2 * np.pi)) + logw[None, :]
    lse = logsumexp(logp, axis=1)
    return logp - lse[:, None], lse


def fit_em(
    data,
    m: int,
    seed: int = 0,
    var_floor: float = 1e-8,
    max_iterations: int = 200,
    rel_tol: float = 1e-6,
    return_history: bool = False,
):
    """Diagonal-covariance GMM by expectation-maximization.

    Stops when the relative change in log-likelihood drops below ``rel_tol``
    or after ``max_iterations``.  A component whose responsibility mass
    vanishes is re-seeded at the worst-explained data point.  With
    ``return_history`` the per-iteration mean log-likelihoods are returned too.
    """
    X = _data(data)
    n, d = X.shape
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > n:
        raise ValueError(f"cannot fit {m} components to {n} points")
    rng = np.random.default_rng(seed)
    data_var = np.maximum(X.var(0), var_floor)
    mu = _farthest_points(X, m, rng)
    var = np.tile(data_var, (m, 1))
    alpha = np.full(m, 1.0 / m)
    history = []
    prev = -np.inf
    for _ in range(max_iterations):
        log_r, lse = _log_resp(X, alpha, mu, var)
        ll = float(lse.mean())
        history.append(ll)
        if np.isfinite(prev) and abs(ll - prev) <= rel_tol * abs(prev):
            break
        prev = ll
        R = np.exp(log_r)
        Nk = R.sum(0)
        empty = Nk < 1e-10 * n
        if np.any(empty):
            worst = int(np.argmin(lse))
            for j in np.flatnonzero(empty):
                R[:, j] = 0.0
                R[worst, j] = 1.0
            Nk = R.sum(0)
            prev = -np.inf
        alpha = Nk / n
        mu = (R.T @ X) / Nk[:, None]
        var = np.maximum((R.T @ X**2) / Nk[:, None] - mu**2, var_floor)
        for j in np.flatnonzero(empty):
            var[j] = data_var
    gmm = gaussian_mixture(alpha, mu, var)
    return (gmm, history) if return_history else gmm


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


def pca_fit_transform(data, D: int) -> tuple[np.ndarray, np.ndarray]:
    """Project centred data onto its top-``D`` principal axes.

    Returns the ``(n, D)`` scores and the ``(d, D)`` orthonormal basis.  Each
    basis vector is signed so that its largest-magnitude entry is positive.
    """
    X = _data(data)
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 points")
    if not 1 <= D <= d:
        raise ValueError(f"target dimension must lie in [1, {d}], got {D}")
    Xc = X - X.mean(0)
    cov = Xc.T @ Xc / (n - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:D]
    basis = vecs[:, order]
    pivot = np.argmax(np.abs(basis), axis=0)
    basis = basis * np.sign(basis[pivot, np.arange(D)])
    return Xc @ basis, basis
