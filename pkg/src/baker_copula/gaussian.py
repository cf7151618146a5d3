"""Gaussian copula baseline fitted by normal-scores correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .simulate import uniform_scores


class SingularCorrelation(ValueError):
    pass


@dataclass
class GaussianCopula:
    corr: np.ndarray

    @property
    def ndim(self) -> int:
        return self.corr.shape[0]

    def density(self, u) -> np.ndarray:
        """Copula density at the rows of ``u``."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        eps = np.finfo(float).eps
        z = norm.ppf(np.clip(u, eps, 1 - eps))
        prec = np.linalg.inv(self.corr) - np.eye(self.ndim)
        _, logdet = np.linalg.slogdet(self.corr)
        quad = np.einsum("ij,jk,ik->i", z, prec, z)
        return np.exp(-0.5 * quad - 0.5 * logdet)

    def conditional_correlation(self, pair=(0, 1), given: int = 2) -> float:
        """Correlation of the normal scores of ``pair`` given the ``given`` axis.

        For a Gaussian copula this does not depend on the conditioning value.
        """
        p = self.corr
        a, b = pair
        num = p[a, b] - p[a, given] * p[b, given]
        return float(num / np.sqrt((1 - p[a, given] ** 2) * (1 - p[b, given] ** 2)))

    def to_dict(self) -> dict:
        return {"family": "gaussian", "dim": self.ndim, "corr": self.corr.tolist()}


def fit_gaussian(data) -> GaussianCopula:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError("need at least two columns")
    z = norm.ppf(np.column_stack([uniform_scores(col) for col in data.T]))
    corr = np.atleast_2d(np.corrcoef(z, rowvar=False))
    if np.min(np.linalg.eigvalsh(corr)) <= 1e-10:
        raise SingularCorrelation("normal-scores correlation matrix is singular")
    return GaussianCopula(corr)


def stratum_density(cop: GaussianCopula, u, v, lo: float, hi: float, nodes: int = 64) -> np.ndarray:
    """Average of the trivariate copula density over ``w`` in ``[lo, hi]``."""
    x, wts = np.polynomial.legendre.leggauss(nodes)
    w = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    total = np.zeros(u.shape)
    for wi, ai in zip(w, wts):
        pts = np.column_stack([u.ravel(), v.ravel(), np.full(u.size, wi)])
        total += 0.5 * ai * cop.density(pts).reshape(u.shape)
    return total
