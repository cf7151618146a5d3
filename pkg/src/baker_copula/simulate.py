"""Data generators and stratified summaries used by the CLI and the tests."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm, spearmanr

from .copula import ParamTensor, sample_copula


def interaction_params(n1: int = 20, n2: int = 20, n3: int = 2) -> ParamTensor:
    """Three-way interaction tensor: independence on the first ``n3 - 1`` slices, a diagonal on the last.

    With the default ``n3 = 2`` slice 1 is uniform ``1/(2 n1 n2)`` and slice 2
    is ``delta_{k1,k2} / (2 n1)``, so ``(X, Y)`` go from nearly independent
    to strongly dependent as the third coordinate grows.
    """
    if n1 != n2:
        raise ValueError("the interaction design needs n1 == n2")
    if n3 != 2:
        raise ValueError("the interaction design is defined for n3 == 2")
    w = np.empty((n1, n2, n3))
    w[:, :, 0] = 1.0 / (2 * n1 * n2)
    w[:, :, 1] = np.eye(n1) / (2 * n1)
    return ParamTensor(w)


def simulate_interaction(n1: int = 20, n2: int = 20, n3: int = 2, count: int = 2000,
                         seed=None) -> np.ndarray:
    """Draw from :func:`interaction_params` and map every axis to a standard normal."""
    u = sample_copula(interaction_params(n1, n2, n3), count, seed)
    eps = np.finfo(float).eps
    return norm.ppf(np.clip(u, eps, 1 - eps))


def uniform_scores(col) -> np.ndarray:
    col = np.asarray(col, dtype=float)
    return np.searchsorted(np.sort(col), col, side="right") / (len(col) + 1)


DEFAULT_STRATA = ((0.0, 0.1), (0.45, 0.55), (0.9, 1.0))


def stratified_spearman(data, pair=(0, 1), by: int = 2, strata=DEFAULT_STRATA) -> list:
    """Spearman correlation of ``pair`` within strata of the uniform scores of column ``by``."""
    data = np.asarray(data, dtype=float)
    w = uniform_scores(data[:, by])
    out = []
    for lo, hi in strata:
        mask = (w > lo) & (w <= hi) if lo > 0 else (w <= hi)
        sub = data[mask]
        rho = spearmanr(sub[:, pair[0]], sub[:, pair[1]])[0] if len(sub) > 2 else float("nan")
        out.append(float(rho))
    return out
