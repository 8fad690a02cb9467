"""Adaptive 1D quadrature over mixture supports (QUADPACK via scipy)."""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np
from scipy import integrate

TAIL_MASS = 1e-12


class DivergentIntegral(ArithmeticError):
    """Raised when an integral keeps growing as its domain is extended."""


def _pieces(lo: float, hi: float, breaks) -> np.ndarray:
    pts = [b for b in breaks if lo < b < hi]
    return np.unique(np.concatenate([[lo], pts, [hi]]))


def integrate_pieces(f: Callable[[float], float], lo: float, hi: float, breaks=(), tol: float = 1e-8) -> float:
    """Sum of adaptive Gauss-Kronrod integrals of ``f`` between sorted breakpoints."""
    edges = _pieces(lo, hi, breaks)
    total = 0.0
    eps = tol / max(len(edges) - 1, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(f, a, b, epsabs=eps * 1e-2, epsrel=tol * 1e-2, limit=400)
            total += val
    return total


def integrate_support(
    f: Callable[[float], float],
    window: tuple[float, float],
    support: tuple[float, float],
    breaks=(),
    tol: float = 1e-8,
    max_extensions: int = 8,
) -> float:
    """Integrate ``f`` over ``support`` starting from ``window``.

    Unbounded sides are extended by doubling until the added mass falls
    below ``TAIL_MASS`` relative to the running total.  If it never does,
    or the integrand overflows, :class:`DivergentIntegral` is raised.
    """
    lo, hi = window
    lo = max(lo, support[0])
    hi = min(hi, support[1])
    total = integrate_pieces(f, lo, hi, breaks, tol)
    if not np.isfinite(total):
        raise DivergentIntegral("integrand overflowed inside the base window")
    width = hi - lo
    for _ in range(max_extensions):
        added = 0.0
        new_lo = max(lo - width, support[0])
        new_hi = min(hi + width, support[1])
        if new_lo < lo:
            added += integrate_pieces(f, new_lo, lo, (), tol)
        if new_hi > hi:
            added += integrate_pieces(f, hi, new_hi, (), tol)
        if not np.isfinite(added):
            raise DivergentIntegral("integrand overflowed while extending the domain")
        total += added
        if abs(added) <= TAIL_MASS * max(1.0, abs(total)):
            return total
        lo, hi, width = new_lo, new_hi, 2.0 * width
    raise DivergentIntegral(f"integral still growing after {max_extensions} domain extensions")
