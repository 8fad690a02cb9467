"""Exact and entropic optimal transport over the transport polytope U(a, b)."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .distances import CostMatrix, GroundDistanceSpec, cost_matrix
from .mixture import Mixture

MARGINAL_TOL = 1e-9
_STAGE_TOL = 1e-2


@dataclass(frozen=True, eq=False)
class TransportPlan:
    coupling: np.ndarray
    value: float
    solver: str
    iterations: int = 0
    residual: float = 0.0
    source: np.ndarray | None = None
    target: np.ndarray | None = None

    def to_dict(self) -> dict:
        d = {
            "coupling": self.coupling.tolist(),
            "value": self.value,
            "solver": self.solver,
            "iterations": self.iterations,
            "residual": self.residual,
        }
        if self.source is not None:
            d["source"] = self.source.tolist()
            d["target"] = self.target.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TransportPlan":
        for key in ("coupling", "value", "solver"):
            if key not in d:
                raise ValueError(f"transport plan field {key!r} is missing")
        W = np.asarray(d["coupling"], dtype=float)
        if W.ndim != 2 or np.any(W < 0) or not np.all(np.isfinite(W)):
            raise ValueError("transport plan field 'coupling' must be a finite non-negative matrix")
        src = d.get("source")
        tgt = d.get("target")
        return cls(
            W,
            float(d["value"]),
            str(d["solver"]),
            int(d.get("iterations", 0)),
            float(d.get("residual", 0.0)),
            None if src is None else np.asarray(src, dtype=float),
            None if tgt is None else np.asarray(tgt, dtype=float),
        )


@dataclass(frozen=True)
class SinkhornConfig:
    """Entropic regularization settings.

    ``gamma`` is the regularization strength in cost units.  When it is left
    as ``None`` it is derived from the cost matrix as
    ``median(M) / lambda_level``.
    """

    gamma: float | None = None
    lambda_level: float = 10.0
    max_iterations: int = 1000
    stop_threshold: float = 1e-10

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.lambda_level > 0:
            raise ValueError("lambda_level must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.stop_threshold > 0:
            raise ValueError("stop_threshold must be positive")

    def resolve_gamma(self, M: np.ndarray) -> float:
        if self.gamma is not None:
            return self.gamma
        scale = float(np.median(M))
        if scale <= 0:
            # degenerate cost matrices (mostly zeros) fall back to the mean, then to 1
            scale = float(np.mean(M)) or 1.0
        return scale / self.lambda_level


def _values(M) -> np.ndarray:
    return np.asarray(M.values if isinstance(M, CostMatrix) else M, dtype=float)


def _marginals(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if np.any(a < 0) or np.any(b < 0) or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("marginals must be finite and non-negative")
    sa, sb = a.sum(), b.sum()
    if abs(sa - 1.0) > MARGINAL_TOL or abs(sb - 1.0) > MARGINAL_TOL:
        raise ValueError(f"marginals must sum to 1 (got {sa:.12g} and {sb:.12g})")
    return a / sa, b / sb


# ---------------------------------------------------------------------------
# Network simplex on the bipartite transportation graph
# ---------------------------------------------------------------------------


def _northwest_corner(a, b):
    k1, k2 = a.size, b.size
    W = np.zeros((k1, k2))
    ra, rb = a.copy(), b.copy()
    basis = []
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        W[i, j] = x
        basis.append((i, j))
        ra[i] -= x
        rb[j] -= x
        if i == k1 - 1 and j == k2 - 1:
            break
        if i == k1 - 1:
            j += 1
        elif j == k2 - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return W, basis


def _tree(basis, k1, k2):
    adj = [[] for _ in range(k1 + k2)]
    for i, j in basis:
        adj[i].append(k1 + j)
        adj[k1 + j].append(i)
    return adj


def _potentials(basis, M, k1, k2):
    adj = _tree(basis, k1, k2)
    pot = np.full(k1 + k2, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if np.isnan(pot[nb]):
                # u_i + v_j = c_ij on basic arcs
                if node < k1:
                    pot[nb] = M[node, nb - k1] - pot[node]
                else:
                    pot[nb] = M[nb, node - k1] - pot[node]
                queue.append(nb)
    return pot[:k1], pot[k1:], adj


def _tree_path(adj, start, goal):
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def _product_plan(a, b, C, solver) -> TransportPlan:
    # with a single row or column U(a, b) holds only the product coupling
    W = np.outer(a, b)
    return TransportPlan(W, float(np.sum(W * C)), solver, 0, 0.0, a, b)


def solve_exact(a, b, M) -> TransportPlan:
    """Optimal coupling of ``min <W, M>`` over U(a, b) by the network simplex.

    Starts from the northwest-corner basis and pivots on the most negative
    reduced cost (ties: lowest ``(i, j)``).  After a run of degenerate
    pivots the rule switches to Bland's (first negative arc, lowest leaving
    arc), which rules out cycling.  The returned plan is a basic solution
    with at most ``k1 + k2 - 1`` positive entries.
    """
    a, b = _marginals(a, b)
    C = _values(M)
    k1, k2 = a.size, b.size
    if C.shape != (k1, k2):
        raise ValueError(f"cost matrix shape {C.shape} does not match marginals ({k1}, {k2})")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    if min(k1, k2) == 1:
        return _product_plan(a, b, C, "exact")
    W, basis = _northwest_corner(a, b)
    tol = 1e-12 * max(1.0, float(np.abs(C).max()))
    degenerate_run, bland = 0, False
    max_pivots = 50 * (k1 * k2 + k1 + k2) + 1000
    pivots = 0
    while True:
        u, v, adj = _potentials(basis, C, k1, k2)
        R = C - u[:, None] - v[None, :]
        if bland:
            neg = np.flatnonzero(R.ravel() < -tol)
            if neg.size == 0:
                break
            flat = int(neg[0])
        else:
            flat = int(np.argmin(R))
            if R.flat[flat] >= -tol:
                break
        ei, ej = divmod(flat, k2)
        path = _tree_path(adj, ei, k1 + ej)
        arcs = []
        for s, t in zip(path[:-1], path[1:]):
            arcs.append((s, t - k1) if s < k1 else (t, s - k1))
        minus = arcs[0::2]
        plus = arcs[1::2]
        theta = min(W[c] for c in minus)
        leaving = min(c for c in minus if W[c] == theta)
        for c in plus:
            W[c] += theta
        for c in minus:
            W[c] -= theta
        W[leaving] = 0.0
        W[ei, ej] = theta
        basis.remove(leaving)
        basis.append((ei, ej))
        pivots += 1
        degenerate_run = degenerate_run + 1 if theta == 0 else 0
        if degenerate_run > k1 + k2:
            bland = True
        if pivots > max_pivots:
            raise RuntimeError("network simplex exceeded its pivot budget")
    W = np.maximum(W, 0.0)
    residual = float(np.abs(W.sum(1) - a).sum() + np.abs(W.sum(0) - b).sum())
    return TransportPlan(W, float(np.sum(W * C)), "exact", pivots, residual, a, b)


def solve_assignment(M) -> TransportPlan:
    """Exact OT between two uniform ``n``-point measures (a permutation / n)."""
    from scipy.optimize import linear_sum_assignment

    C = _values(M)
    n = C.shape[0]
    if C.shape != (n, n):
        raise ValueError("assignment needs a square cost matrix")
    rows, cols = linear_sum_assignment(C)
    W = np.zeros_like(C)
    W[rows, cols] = 1.0 / n
    u = np.full(n, 1.0 / n)
    return TransportPlan(W, float(C[rows, cols].sum() / n), "exact", n, 0.0, u, u)


# ---------------------------------------------------------------------------
# Sinkhorn-Knopp in the log domain
# ---------------------------------------------------------------------------


def _round_to_polytope(W, a, b):
    # scale overfull rows/columns down, then spread the deficits as a rank-one term
    W = W * np.minimum(a / np.maximum(W.sum(1), 1e-300), 1.0)[:, None]
    W = W * np.minimum(b / np.maximum(W.sum(0), 1e-300), 1.0)[None, :]
    da = np.maximum(a - W.sum(1), 0.0)
    db = np.maximum(b - W.sum(0), 0.0)
    if da.sum() > 0 and db.sum() > 0:
        W = W + np.outer(da, db) / db.sum()
    return W


def solve_sinkhorn(a, b, M, cfg: SinkhornConfig | None = None) -> TransportPlan:
    """Entropic plan ``argmin <W, M> - gamma H(W)`` over U(a, b).

    Scaling runs on dual potentials with log-sum-exp so that small
    ``gamma`` does not underflow ``exp(-M / gamma)``.  Small ``gamma`` is
    reached by warm-started annealing from ``max(M)``, halving per stage;
    intermediate stages stop at a residual of ``1e-2 * gamma_stage`` and
    all stages share the ``max_iterations`` budget.  The final stage stops
    once the row-marginal L1 residual is below ``stop_threshold``.

    The recorded residual is the one reached by the scaling.  If it is above
    the threshold the plan is projected onto U(a, b) so that it stays
    feasible.  The reported value excludes the entropy term.
    """
    cfg = cfg or SinkhornConfig()
    a, b = _marginals(a, b)
    C = _values(M)
    if C.shape != (a.size, b.size):
        raise ValueError(f"cost matrix shape {C.shape} does not match marginals ({a.size}, {b.size})")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix must be finite")
    if min(a.size, b.size) == 1:
        return _product_plan(a, b, C, "sinkhorn")
    gamma = cfg.resolve_gamma(C)
    with np.errstate(divide="ignore"):
        loga, logb = np.log(a), np.log(b)
    schedule = []
    g_stage = float(C.max())
    while g_stage > gamma:
        schedule.append(g_stage)
        g_stage *= 0.5
    schedule.append(gamma)
    # potentials in cost units so they carry over between stages
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    residual = np.inf
    it = 0
    W = np.outer(a, b)
    for stage, eps in enumerate(schedule):
        last = stage == len(schedule) - 1
        target = cfg.stop_threshold if last else max(cfg.stop_threshold, _STAGE_TOL * eps)
        S = -C / eps
        while it < cfg.max_iterations:
            it += 1
            f = eps * (loga - logsumexp(S + g[None, :] / eps, axis=1))
            g = eps * (logb - logsumexp(S + f[:, None] / eps, axis=0))
            W = np.exp(S + f[:, None] / eps + g[None, :] / eps)
            if np.isnan(W).any():
                raise FloatingPointError(f"NaN in Sinkhorn scaling (gamma={eps:g} too small)")
            residual = float(np.abs(W.sum(1) - a).sum())
            if residual <= target:
                break
        if it >= cfg.max_iterations:
            break
    if residual > cfg.stop_threshold:
        W = _round_to_polytope(W, a, b)
    return TransportPlan(W, float(np.sum(W * C)), "sinkhorn", it, residual, a, b)


# ---------------------------------------------------------------------------
# CROT between mixtures
# ---------------------------------------------------------------------------


def crot(
    m1: Mixture,
    m2: Mixture,
    spec: GroundDistanceSpec,
    solver: str | SinkhornConfig = "exact",
    M: CostMatrix | None = None,
) -> tuple[float, TransportPlan, CostMatrix]:
    """Optimal transport between mixture weights with a component ground distance.

    ``solver`` is ``"exact"`` or a :class:`SinkhornConfig` (the string
    ``"sinkhorn"`` uses the default config).  A precomputed ``M`` is reused.
    """
    M = M if M is not None else cost_matrix(m1, m2, spec)
    if isinstance(solver, SinkhornConfig) or solver == "sinkhorn":
        cfg = solver if isinstance(solver, SinkhornConfig) else SinkhornConfig()
        plan = solve_sinkhorn(m1.weights, m2.weights, M, cfg)
    elif solver == "exact":
        plan = solve_exact(m1.weights, m2.weights, M)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return plan.value, plan, M


def coupling_floor_check(plan, a=None, b=None, tol: float = 1e-12) -> bool:
    """Check ``max_j W_ij >= a_i / k2`` and ``max_i W_ij >= b_j / k1``.

    The marginals default to those recorded on the plan, else to its own
    row and column sums.
    """
    if isinstance(plan, TransportPlan):
        W = np.asarray(plan.coupling, dtype=float)
        a = plan.source if a is None else a
        b = plan.target if b is None else b
    else:
        W = np.asarray(plan, dtype=float)
    k1, k2 = W.shape
    a = W.sum(1) if a is None else np.asarray(a, dtype=float)
    b = W.sum(0) if b is None else np.asarray(b, dtype=float)
    rows = np.all(W.max(1) >= a / k2 - tol)
    cols = np.all(W.max(0) >= b / k1 - tol)
    return bool(rows and cols)
