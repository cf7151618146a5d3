"""Bernstein copula (Baker's distribution) model and evaluators."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import bernstein
from .errors import DomainError, InvalidParams
from .marginals import MarginalModel

ACCEPT_TOL = 1e-10
REPAIR_TOL = 1e-8


def axis_sums(weights: np.ndarray, axis: int) -> np.ndarray:
    """Sum of ``weights`` over every axis except ``axis``."""
    other = tuple(a for a in range(weights.ndim) if a != axis)
    return weights.sum(axis=other) if other else weights.copy()


def constraint_residual(weights: np.ndarray) -> float:
    """Largest deviation of any axis-level sum from ``1 / n_j``."""
    return max(
        float(np.max(np.abs(axis_sums(weights, j) - 1.0 / weights.shape[j])))
        for j in range(weights.ndim)
    )


def _rebalance(weights: np.ndarray, sweeps: int = 50) -> np.ndarray:
    w = weights.copy()
    for _ in range(sweeps):
        for j, n_j in enumerate(w.shape):
            s = axis_sums(w, j)
            shape = [1] * w.ndim
            shape[j] = n_j
            w = w * np.where(s > 0, 1.0 / (n_j * np.where(s > 0, s, 1.0)), 1.0).reshape(shape)
        if constraint_residual(w) < 1e-15:
            break
    return w


class ParamTensor:
    """Nonnegative weight tensor ``R`` whose axis marginals are uniform.

    Inputs off the constraint set by at most ``REPAIR_TOL`` are rebalanced by
    a few proportional-fitting sweeps; anything worse is rejected.
    """

    __slots__ = ("weights",)

    def __init__(self, weights, *, check: bool = True):
        w = np.array(weights, dtype=float)
        if w.ndim == 0:
            w = w.reshape(1)
        if check:
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise InvalidParams("weights must be finite and nonnegative")
            resid = constraint_residual(w)
            if resid > REPAIR_TOL:
                raise InvalidParams(f"axis sums violate uniform marginals by {resid:.3g}")
            if resid > ACCEPT_TOL:
                w = _rebalance(w)
        w.setflags(write=False)
        self.weights = w

    @property
    def dims(self) -> tuple:
        return self.weights.shape

    @property
    def ndim(self) -> int:
        return self.weights.ndim

    def __repr__(self):
        return f"ParamTensor(dims={self.dims})"

    @classmethod
    def uniform(cls, dims: Sequence[int]) -> "ParamTensor":
        dims = tuple(int(n) for n in dims)
        return cls(np.full(dims, 1.0 / np.prod(dims)))

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "weights": self.weights.ravel().tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "ParamTensor":
        return cls(np.array(data["weights"], dtype=float).reshape(data["dims"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ParamTensor":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class HpmModel:
    """``(1 - q) * independence + q * H_n^{sign}``."""

    sign: str
    q: float
    n: int

    def __post_init__(self):
        if self.sign not in ("+", "-"):
            raise ValueError("sign must be '+' or '-'")
        if not 0.0 <= self.q <= 1.0 or self.n < 1:
            raise ValueError("need 0 <= q <= 1 and n >= 1")

    def params(self) -> ParamTensor:
        return hpm_params(self.sign, self.q, self.n)


@dataclass(frozen=True, eq=False)
class BakerModel:
    """Copula weights plus one marginal per axis.

    ``marginals=None`` means uniform (identity) marginals, i.e. the copula itself.
    """

    params: ParamTensor
    marginals: Optional[Sequence[MarginalModel]] = None

    def __post_init__(self):
        if self.marginals is not None and len(self.marginals) != self.params.ndim:
            raise ValueError("need one marginal per axis")


def _as_weights(params) -> np.ndarray:
    return params.weights if isinstance(params, ParamTensor) else np.asarray(params, dtype=float)


def _as_points(u, d: int) -> np.ndarray:
    pts = np.asarray(u, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] != d:
        raise DomainError(f"points must have {d} coordinates")
    return bernstein.clamp_unit(pts)


def contract(weights: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_k w_k prod_j factors[j][i, k_j]`` for every row ``i``.

    The first axis goes through a matrix product; the rest are folded in one
    at a time, which avoids materialising an ``(N, prod n_j)`` array.
    """
    n_rows = factors[0].shape[0]
    acc = factors[0] @ weights.reshape(weights.shape[0], -1)
    for f in factors[1:]:
        acc = np.einsum("zab,za->zb", acc.reshape(n_rows, f.shape[1], -1), f)
    return acc.reshape(n_rows)


def density_factors(dims, pts: np.ndarray) -> list:
    """Per-axis matrices ``b_{k-1, n_j-1}(u_ij)``, shape ``(N, n_j)``."""
    return [bernstein.basis_matrix(n - 1, pts[:, j]) for j, n in enumerate(dims)]


def copula_density(params, u) -> np.ndarray | float:
    """``(prod n_j) sum_k r_k prod_j b_{k_j-1, n_j-1}(u_j)``.

    ``u`` is a length-d vector or an ``(N, d)`` array.
    """
    w = _as_weights(params)
    pts = _as_points(u, w.ndim)
    val = np.prod(w.shape) * contract(w, density_factors(w.shape, pts))
    return float(val[0]) if np.ndim(u) == 1 else val


def copula_cdf(params, u) -> np.ndarray | float:
    """``(prod n_j) sum_k r_k prod_j B_{k_j-1, n_j-1}(u_j)``."""
    w = _as_weights(params)
    pts = _as_points(u, w.ndim)
    factors = [bernstein.cum_matrix(n - 1, pts[:, j]) for j, n in enumerate(w.shape)]
    val = np.clip(np.prod(w.shape) * contract(w, factors), 0.0, 1.0)
    return float(val[0]) if np.ndim(u) == 1 else val


def copula_density_partial(params, u, axis: int) -> np.ndarray | float:
    """Partial derivative of :func:`copula_density` along ``axis``."""
    w = _as_weights(params)
    pts = _as_points(u, w.ndim)
    factors = density_factors(w.shape, pts)
    factors[axis] = bernstein.deriv_matrix(w.shape[axis] - 1, pts[:, axis])
    val = np.prod(w.shape) * contract(w, factors)
    return float(val[0]) if np.ndim(u) == 1 else val


def joint_density(model: BakerModel, x) -> np.ndarray | float:
    """``c(F_1(x_1), ..., F_d(x_d)) prod_j f_j(x_j)`` for continuous marginals."""
    d = model.params.ndim
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if model.marginals is None:
        return copula_density(model.params, pts[0] if single else pts)
    if any(m.is_discrete for m in model.marginals):
        raise TypeError("joint_density needs continuous marginals")
    u = np.column_stack([model.marginals[j].cdf(pts[:, j]) for j in range(d)])
    val = copula_density(model.params, u)
    for j in range(d):
        val = val * model.marginals[j].pdf(pts[:, j])
    return float(val[0]) if single else val


def hpm_params(sign: str, q: float, n: int) -> ParamTensor:
    """Weights ``(1 - q)/n^2 + q delta/n`` on the diagonal (``+``) or anti-diagonal (``-``)."""
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    if not 0.0 <= q <= 1.0 or n < 1:
        raise ValueError("need 0 <= q <= 1 and n >= 1")
    eye = np.eye(n) if sign == "+" else np.fliplr(np.eye(n))
    return ParamTensor((1.0 - q) / n**2 + q * eye / n)


def spearman_rho(params) -> float:
    """Rank correlation ``12 * integral(C) - 3`` of a bivariate model, in closed form."""
    w = _as_weights(params)
    if w.ndim != 2:
        raise ValueError("spearman_rho is defined for bivariate models only")
    m, n = w.shape
    a = np.array([bernstein.cum_total(k, m - 1) for k in range(m)])
    b = np.array([bernstein.cum_total(l, n - 1) for l in range(n)])
    return float(12.0 * m * n * (a @ w @ b) - 3.0)


def sample_copula(params, count: int, seed=None) -> np.ndarray:
    """Draw ``count`` points from the copula.

    Each row picks a component ``k`` with probability ``r_k`` and then draws
    ``U_j ~ Beta(k_j, n_j - k_j + 1)``, the law of the ``k_j``-th of ``n_j``
    uniform order statistics.
    """
    w = _as_weights(params)
    rng = np.random.default_rng(seed)
    flat = w.ravel()
    comp = rng.choice(flat.size, size=count, p=flat / flat.sum())
    idx = np.unravel_index(comp, w.shape)
    out = np.empty((count, w.ndim))
    for j, n_j in enumerate(w.shape):
        k = idx[j] + 1
        out[:, j] = rng.beta(k, n_j - k + 1)
    return out


def sample(model: BakerModel, count: int, seed=None) -> np.ndarray:
    """Draw ``count`` rows from the model on the data scale."""
    u = sample_copula(model.params, count, seed)
    if model.marginals is None:
        return u
    eps = np.finfo(float).eps
    u = np.clip(u, eps, 1 - eps)
    return np.column_stack(
        [m.quantile(u[:, j], interpolate=not m.is_discrete) for j, m in enumerate(model.marginals)]
    ) if count else np.empty((0, model.params.ndim))
