"""Asymptotic variances for the semiparametric estimators.

The covariance of the weight estimate is the sandwich ``B^+ S B^+`` built
from per-observation score vectors (``u``) and their versions corrected for
the estimated marginals (``v``).  The corrections are sums over the
observations ranked at or above the current one on each axis; they are
formed with one sort and suffix sums instead of a double loop.

These variances are larger than the known-marginals information bound: the
marginals are estimated, so the estimator is not efficient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import bernstein
from .copula import ParamTensor
from .em import PseudoSample
from .errors import DegenerateDensity, DegenerateModel


@dataclass
class CovarianceEstimate:
    """``sigma`` estimates ``N Var(R_hat)`` in lexicographic (row-major) index order."""

    sigma: np.ndarray
    B: np.ndarray
    S: np.ndarray
    rank: int
    dims: tuple
    n_obs: int

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "order": "lexicographic",
            "n_obs": self.n_obs,
            "sigma": self.sigma.ravel().tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "CovarianceEstimate":
        size = int(np.prod(data["dims"]))
        sigma = np.array(data["sigma"], dtype=float).reshape(size, size)
        empty = np.full((size, size), np.nan)
        return cls(sigma, empty, empty, int(np.linalg.matrix_rank(sigma)),
                   tuple(data["dims"]), int(data["n_obs"]))


def pinv_sym(matrix, rel_tol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix by eigendecomposition."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    a = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(a)
    top = np.max(np.abs(vals)) if vals.size else 0.0
    keep = np.abs(vals) > rel_tol * top if top > 0 else np.zeros_like(vals, dtype=bool)
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    return (vecs * inv) @ vecs.T


def upper_rank_sums(keys: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``out[i] = sum_{j : keys[i] <= keys[j]} values[j]`` (ties included)."""
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    vals = values[order]
    suffix = np.flip(np.cumsum(np.flip(vals, axis=0), axis=0), axis=0)
    suffix = np.concatenate([suffix, np.zeros((1,) + vals.shape[1:])], axis=0)
    pos = np.searchsorted(sorted_keys, keys, side="left")
    return suffix[pos]


def _check_bivariate(pseudo: PseudoSample):
    if pseudo.ndim != 2 or not pseudo.all_continuous:
        raise ValueError("needs a bivariate continuous pseudo-sample")


def pseudo_obs(params: ParamTensor, pseudo: PseudoSample):
    """Score vectors ``U`` and marginal-corrected vectors ``V``, each ``(N, m n)``."""
    _check_bivariate(pseudo)
    w = params.weights
    m, n = w.shape
    x, y = pseudo.right[:, 0], pseudo.right[:, 1]
    bx = bernstein.basis_matrix(m - 1, x)
    by = bernstein.basis_matrix(n - 1, y)
    dbx = bernstein.deriv_matrix(m - 1, x)
    dby = bernstein.deriv_matrix(n - 1, y)
    c = m * n * np.einsum("ik,kl,il->i", bx, w, by)
    if np.any(~(c > 0)):
        raise DegenerateDensity("zero copula density at an observation")
    c_u = m * n * np.einsum("ik,kl,il->i", dbx, w, by)
    c_v = m * n * np.einsum("ik,kl,il->i", bx, w, dby)
    prod = m * n * np.einsum("ik,il->ikl", bx, by).reshape(len(x), m * n)
    U = prod / c[:, None]
    N = len(x)
    corr_x = upper_rank_sums(x, prod * (c_u / c**2)[:, None]) / N
    corr_y = upper_rank_sums(y, prod * (c_v / c**2)[:, None]) / N
    V = U - corr_x - corr_y
    return U, V


def _cov(a: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.cov(a, rowvar=False, ddof=1))


def tangent_projector(dims) -> np.ndarray:
    """Orthogonal projector onto the directions that keep every row and column sum fixed."""
    m, n = dims
    A = np.vstack([np.kron(np.eye(m), np.ones((1, n))), np.kron(np.ones((1, m)), np.eye(n))])
    return np.eye(m * n) - np.linalg.pinv(A) @ A


def covariance_r(params: ParamTensor, pseudo: PseudoSample, rel_tol: float = 1e-10,
                 project: bool = True) -> CovarianceEstimate:
    """Sandwich estimate ``B^+ S B^+`` of ``N Var(R_hat)``.

    ``B`` and ``S`` are the sample covariances (divisor ``N - 1``) of the
    score vectors and their corrected versions.  With ``project`` (the
    default) both are first projected onto the tangent space of the
    row/column-sum constraints, which is where ``R_hat - R`` lives; ``B``
    then has rank ``(m - 1)(n - 1)``.  ``project=False`` uses the raw
    ``mn``-dimensional vectors.
    """
    U, V = pseudo_obs(params, pseudo)
    if project:
        P = tangent_projector(params.dims)
        U, V = U @ P, V @ P
    B = _cov(U)
    S = _cov(V)
    B_plus = pinv_sym(B, rel_tol)
    sigma = B_plus @ S @ B_plus
    sigma = 0.5 * (sigma + sigma.T)
    rank = int(np.sum(np.abs(np.linalg.eigvalsh(B)) > rel_tol * max(np.max(np.abs(B)), 1e-300)))
    return CovarianceEstimate(sigma, B, S, rank, params.dims, pseudo.n_obs)


def _hpm_density_and_partials(sign, n, x, y):
    bx = bernstein.basis_matrix(n - 1, x)
    by = bernstein.basis_matrix(n - 1, y)
    dbx = bernstein.deriv_matrix(n - 1, x)
    dby = bernstein.deriv_matrix(n - 1, y)
    if sign == "-":
        by, dby = by[:, ::-1], dby[:, ::-1]
    c = n * np.sum(bx * by, axis=1)
    c_u = n * np.sum(dbx * by, axis=1)
    c_v = n * np.sum(bx * dby, axis=1)
    return c, c_u, c_v


def var_qhat(sign: str, q: float, n: int, pseudo: PseudoSample) -> float:
    """Approximate ``Var(q_hat)`` as ``s / (N beta^2)``."""
    _check_bivariate(pseudo)
    if n == 1:
        raise DegenerateModel("order 1 gives the independence copula; q is not identified")
    x, y = pseudo.right[:, 0], pseudo.right[:, 1]
    N = len(x)
    c, c_u, c_v = _hpm_density_and_partials(sign, n, x, y)
    den = 1.0 - q + q * c
    u = (c - 1.0) / den
    core = (c - 1.0) / den**2
    v = (u - q / N * upper_rank_sums(x, core * c_u)
         - q / N * upper_rank_sums(y, core * c_v))
    beta = np.var(u, ddof=1)
    if beta == 0:
        raise DegenerateModel("score has zero variance")
    s = np.var(v, ddof=1)
    return float(s / (N * beta**2))


def density_gradient(params: ParamTensor, x, marginals) -> np.ndarray:
    """Vectors ``f_{k:m}(x) g_{l:n}(y)`` in lexicographic order, shape ``(P, m n)``."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = params.dims
    fx = m * bernstein.basis_matrix(m - 1, marginals[0].cdf(pts[:, 0])) * marginals[0].pdf(pts[:, 0])[:, None]
    gy = n * bernstein.basis_matrix(n - 1, marginals[1].cdf(pts[:, 1])) * marginals[1].pdf(pts[:, 1])[:, None]
    return np.einsum("pk,pl->pkl", fx, gy).reshape(len(pts), m * n)


def var_density_at(params: ParamTensor, sigma: CovarianceEstimate, x, marginals):
    """Asymptotic variance of the fitted joint density at ``x`` (a point or ``(P, 2)`` array)."""
    if params.ndim != 2:
        raise ValueError("var_density_at needs a bivariate model")
    grad = density_gradient(params, x, marginals)
    val = np.einsum("pa,ab,pb->p", grad, sigma.sigma, grad) / sigma.n_obs
    val = np.maximum(val, 0.0)
    return float(val[0]) if np.ndim(x) == 1 else val
