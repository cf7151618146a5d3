"""Bernstein basis polynomials, their derivatives and cumulative integrals.

``b_{k,n}(u) = C(n, k) u^k (1 - u)^(n - k)`` and ``B_{k,n}(u)`` is its integral
from 0 to ``u``.  The scalar functions validate their arguments; the ``*_matrix``
variants evaluate every index ``k = 0..n`` at a vector of points and are what
the estimation code uses.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .errors import DomainError

# Below this degree binomials are formed exactly; above it in log space.
LOG_SPACE_DEGREE = 30
# Excursions outside [0, 1] smaller than this are treated as rounding noise.
CLAMP_TOL = 1e-12


def _check_index(k: int, n: int) -> None:
    if n < 0 or k < 0 or k > n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")


def clamp_unit(u):
    """Clamp ``u`` onto [0, 1], rejecting excursions larger than ``CLAMP_TOL``."""
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < -CLAMP_TOL) or np.any(arr > 1 + CLAMP_TOL):
        raise DomainError("argument outside the unit interval")
    return np.clip(arr, 0.0, 1.0)


def _binomials(n: int) -> np.ndarray:
    return np.array([float(math.comb(n, k)) for k in range(n + 1)])


def basis_matrix(n: int, u) -> np.ndarray:
    """Evaluate ``b_{k,n}(u)`` for all ``k`` at every point of ``u``.

    Returns an array of shape ``u.shape + (n + 1,)``.
    """
    if n < 0:
        raise DomainError(f"degree must be >= 0, got {n}")
    u = clamp_unit(u)
    k = np.arange(n + 1, dtype=float)
    uu = u[..., None]
    if n <= LOG_SPACE_DEGREE:
        return _binomials(n) * uu**k * (1.0 - uu) ** (n - k)
    return np.exp(log_basis_matrix(n, u))


def log_basis_matrix(n: int, u) -> np.ndarray:
    """Natural log of :func:`basis_matrix`; ``-inf`` where the basis vanishes."""
    if n < 0:
        raise DomainError(f"degree must be >= 0, got {n}")
    u = clamp_unit(u)
    k = np.arange(n + 1, dtype=float)
    uu = u[..., None]
    log_binom = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    with np.errstate(divide="ignore"):
        return log_binom + xlogy(k, uu) + xlog1py(n - k, -uu)


def deriv_matrix(n: int, u) -> np.ndarray:
    """Derivatives ``d/du b_{k,n}(u)`` for all ``k``; shape ``u.shape + (n + 1,)``.

    Uses ``n (b_{k-1,n-1} - b_{k,n-1})`` with ``b_{-1,n-1} = b_{n,n-1} = 0``.
    """
    u = clamp_unit(u)
    if n == 0:
        return np.zeros(u.shape + (1,))
    lower = basis_matrix(n - 1, u)
    pad = np.zeros(u.shape + (1,))
    return n * (np.concatenate([pad, lower], axis=-1) - np.concatenate([lower, pad], axis=-1))


def cum_matrix(n: int, u) -> np.ndarray:
    """Cumulative integrals ``B_{k,n}(u)`` for all ``k``; shape ``u.shape + (n + 1,)``.

    For integer parameters the regularized incomplete beta ``I_u(k+1, n-k+1)``
    is the upper binomial tail ``sum_{j>k} b_{j,n+1}(u)``, so
    ``B_{k,n}(u) = tail / (n + 1)``.  All summands are nonnegative, so the sum
    is accurate in both tails.
    """
    upper = basis_matrix(n + 1, u)
    tails = np.flip(np.cumsum(np.flip(upper, axis=-1), axis=-1), axis=-1)
    return np.clip(tails[..., 1:], 0.0, 1.0) / (n + 1)


def basis(k: int, n: int, u: float) -> float:
    """Bernstein basis polynomial ``b_{k,n}(u)``."""
    _check_index(k, n)
    u = float(clamp_unit(u))
    if n > LOG_SPACE_DEGREE:
        log_c = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
        if (u == 0.0 and k > 0) or (u == 1.0 and k < n):
            return 0.0
        return math.exp(log_c + float(xlogy(k, u)) + float(xlog1py(n - k, -u)))
    return math.comb(n, k) * u**k * (1.0 - u) ** (n - k)


def basis_deriv(k: int, n: int, u: float) -> float:
    """Derivative of ``b_{k,n}`` at ``u``."""
    _check_index(k, n)
    if n == 0:
        return 0.0
    left = basis(k - 1, n - 1, u) if k >= 1 else 0.0
    right = basis(k, n - 1, u) if k <= n - 1 else 0.0
    return n * (left - right)


def cum(k: int, n: int, u: float) -> float:
    """``B_{k,n}(u) = I_u(k + 1, n - k + 1) / (n + 1)``."""
    _check_index(k, n)
    return float(cum_matrix(n, u)[k])


def cum_total(k: int, n: int) -> float:
    """Closed form of the integral of ``B_{k,n}`` over [0, 1]."""
    _check_index(k, n)
    return (n + 1 - k) / ((n + 1) * (n + 2))
