"""Semiparametric per-variable marginals.

Continuous variables use the empirical CDF scaled by ``N / (N + 1)`` together
with a Gaussian kernel density; discrete variables use relative frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .errors import DomainError

CONTINUOUS = "continuous"
DISCRETE = "discrete"


@dataclass(frozen=True, eq=False)
class MarginalModel:
    """Fitted marginal distribution of one variable.

    Attributes
    ----------
    kind : str
        ``"continuous"`` or ``"discrete"``.
    values : ndarray
        Sorted sample for the continuous kind; sorted support for the discrete kind.
    bandwidth : float or None
        Kernel bandwidth (continuous kind only).
    probs : ndarray or None
        Probabilities of ``values`` (discrete kind only).
    """

    kind: str
    values: np.ndarray
    bandwidth: Optional[float] = None
    probs: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.kind == DISCRETE:
            object.__setattr__(self, "_cum", np.cumsum(self.probs))

    @property
    def n_obs(self) -> int:
        return len(self.values)

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE

    def cdf(self, x):
        return cdf(self, x)

    def cdf_left(self, x):
        return cdf_left(self, x)

    def pdf(self, x):
        return pdf(self, x)

    def pmf(self, x):
        return pmf(self, x)

    def quantile(self, p, interpolate=False):
        return quantile(self, p, interpolate=interpolate)

    def to_dict(self) -> dict:
        if self.kind == DISCRETE:
            return {
                "kind": DISCRETE,
                "support": self.values.tolist(),
                "probs": np.asarray(self.probs).tolist(),
            }
        return {
            "kind": CONTINUOUS,
            "bandwidth": self.bandwidth,
            "sorted_values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarginalModel":
        if data["kind"] == DISCRETE:
            return cls(DISCRETE, np.array(data["support"], dtype=float),
                       probs=np.array(data["probs"], dtype=float))
        if data["kind"] == CONTINUOUS:
            return cls(CONTINUOUS, np.array(data["sorted_values"], dtype=float),
                       bandwidth=float(data["bandwidth"]))
        raise ValueError(f"unknown marginal kind {data['kind']!r}")


def silverman_bandwidth(sample) -> float:
    """Rule-of-thumb bandwidth ``0.9 min(sd, IQR / 1.34) N^(-1/5)``."""
    x = np.asarray(sample, dtype=float)
    sd = np.std(x, ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        # heavy ties can zero the IQR while sd stays positive
        spread = sd
    return 0.9 * spread * len(x) ** (-0.2)


def fit_continuous(sample, bandwidth_override: Optional[float] = None) -> MarginalModel:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two observations")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    if bandwidth_override is not None:
        if bandwidth_override <= 0:
            raise ValueError("bandwidth must be positive")
        h = float(bandwidth_override)
    else:
        h = silverman_bandwidth(x)
        if not h > 0:
            raise ValueError("degenerate sample: zero bandwidth")
    return MarginalModel(CONTINUOUS, np.sort(x), bandwidth=h)


def fit_discrete(sample) -> MarginalModel:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size < 1:
        raise ValueError("need at least one observation")
    support, counts = np.unique(x, return_counts=True)
    return MarginalModel(DISCRETE, support, probs=counts / counts.sum())


def cdf(model: MarginalModel, x):
    """``#{x_i <= x} / (N + 1)`` (continuous) or ``P(X <= x)`` (discrete)."""
    x = np.asarray(x, dtype=float)
    if model.is_discrete:
        idx = np.searchsorted(model.values, x, side="right")
        return np.where(idx > 0, model._cum[np.maximum(idx - 1, 0)], 0.0)
    return np.searchsorted(model.values, x, side="right") / (model.n_obs + 1)


def cdf_left(model: MarginalModel, x):
    """Left limit of :func:`cdf`: mass strictly below ``x``."""
    x = np.asarray(x, dtype=float)
    if model.is_discrete:
        idx = np.searchsorted(model.values, x, side="left")
        return np.where(idx > 0, model._cum[np.maximum(idx - 1, 0)], 0.0)
    return np.searchsorted(model.values, x, side="left") / (model.n_obs + 1)


def pdf(model: MarginalModel, x):
    """Gaussian kernel density estimate."""
    if model.is_discrete:
        raise TypeError("pdf is undefined for a discrete marginal; use pmf")
    x = np.asarray(x, dtype=float)
    h = model.bandwidth
    z = (x[..., None] - model.values) / h
    return norm.pdf(z).sum(axis=-1) / (model.n_obs * h)


def pmf(model: MarginalModel, x):
    """Probability mass ``F(x) - F(x-)``."""
    return cdf(model, x) - cdf_left(model, x)


def quantile(model: MarginalModel, p, interpolate: bool = False):
    """Generalized inverse of :func:`cdf`.

    By default this is the smallest ``x`` with ``cdf(x) >= p``.  With
    ``interpolate=True`` (continuous kind only) the sorted sample is joined
    linearly between the plotting positions ``i / (N + 1)`` and held constant
    beyond the end points; the sampler uses this to avoid repeating data values.
    """
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise DomainError("quantile level must lie in (0, 1)")
    if model.is_discrete:
        idx = np.searchsorted(model._cum, p - 1e-15, side="left")
        return model.values[np.minimum(idx, model.n_obs - 1)]
    n = model.n_obs
    if interpolate:
        grid = np.arange(1, n + 1) / (n + 1)
        return np.interp(p, grid, model.values)
    # smallest i with i / (N + 1) >= p; levels above N/(N+1) map to the maximum
    idx = np.ceil(p * (n + 1) - 1e-9).astype(int)
    return model.values[np.clip(idx, 1, n) - 1]
