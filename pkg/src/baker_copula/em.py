"""EM estimation of Bernstein copula weights and of the H+/H- subfamily.

All likelihoods here are at copula level: for continuous axes the marginal
density factor cancels from every E-step and is constant in the weights, so
it is dropped.  Discrete axes contribute order-statistic probability masses
``n_j (B_{k-1,n_j-1}(F(a)) - B_{k-1,n_j-1}(F(a-)))``.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import bernstein, mstep
from .copula import ParamTensor, contract
from .errors import DegenerateDensity, DegenerateModel, NonConvergence
from .marginals import CONTINUOUS, DISCRETE, MarginalModel, fit_continuous, fit_discrete

log = logging.getLogger(__name__)

EM_TOL = 1e-8
EM_LOGLIK_RTOL = 1e-10
EM_MAX_ITER = 2000
HPM_N_MAX = 64
HPM_TOL = 1e-8
HPM_MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class PseudoSample:
    """Pseudo-observations ``F_j(x_ij)`` and, for discrete axes, ``F_j(x_ij-)``.

    For continuous axes ``left`` equals ``right``.
    """

    right: np.ndarray
    left: np.ndarray
    kinds: tuple

    def __post_init__(self):
        right = np.atleast_2d(np.asarray(self.right, dtype=float))
        left = np.atleast_2d(np.asarray(self.left, dtype=float))
        if right.shape != left.shape or right.shape[1] != len(self.kinds):
            raise ValueError("right, left and kinds disagree in shape")
        if np.any(left > right + 1e-15) or np.any(left < 0) or np.any(right > 1):
            raise ValueError("need 0 <= left <= right <= 1")
        for j, kind in enumerate(self.kinds):
            if kind not in (CONTINUOUS, DISCRETE):
                raise ValueError(f"unknown axis kind {kind!r}")
            if kind == CONTINUOUS and not np.array_equal(left[:, j], right[:, j]):
                raise ValueError("continuous axes need left == right")
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "kinds", tuple(self.kinds))

    @classmethod
    def from_uniform(cls, u) -> "PseudoSample":
        """Continuous pseudo-sample from points already on the unit cube."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return cls(u, u.copy(), (CONTINUOUS,) * u.shape[1])

    @property
    def n_obs(self) -> int:
        return self.right.shape[0]

    @property
    def ndim(self) -> int:
        return self.right.shape[1]

    @property
    def all_continuous(self) -> bool:
        return all(k == CONTINUOUS for k in self.kinds)


def fit_marginals(data, kinds: Sequence[str], bandwidths=None) -> list:
    data = np.asarray(data, dtype=float)
    out = []
    for j, kind in enumerate(kinds):
        if kind == DISCRETE:
            out.append(fit_discrete(data[:, j]))
        else:
            bw = None if bandwidths is None else bandwidths[j]
            out.append(fit_continuous(data[:, j], bw))
    return out


def pseudo_from_data(data, marginals: Sequence[MarginalModel]) -> PseudoSample:
    data = np.asarray(data, dtype=float)
    right = np.column_stack([m.cdf(data[:, j]) for j, m in enumerate(marginals)])
    left = np.column_stack([
        m.cdf_left(data[:, j]) if m.is_discrete else right[:, j]
        for j, m in enumerate(marginals)
    ])
    return PseudoSample(right, left, tuple(m.kind for m in marginals))


def rank_pseudo(data) -> PseudoSample:
    """Continuous pseudo-sample ``rank / (N + 1)`` (ties share the maximal rank)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    u = np.column_stack([
        np.searchsorted(np.sort(col), col, side="right") / (n + 1) for col in data.T
    ])
    return PseudoSample.from_uniform(u)


# ---------------------------------------------------------------- factors

def axis_factors(pseudo: PseudoSample, dims) -> list:
    """Per-axis ``(N, n_j)`` matrices whose weighted product is the likelihood."""
    if len(dims) != pseudo.ndim:
        raise ValueError("dims do not match the number of axes")
    out = []
    for j, n_j in enumerate(dims):
        if pseudo.kinds[j] == CONTINUOUS:
            out.append(n_j * bernstein.basis_matrix(n_j - 1, pseudo.right[:, j]))
        else:
            hi = bernstein.cum_matrix(n_j - 1, pseudo.right[:, j])
            lo = bernstein.cum_matrix(n_j - 1, pseudo.left[:, j])
            out.append(n_j * np.clip(hi - lo, 0.0, None))
    return out


def _compress(pseudo: PseudoSample):
    """Unique observations and their multiplicities."""
    key = np.hstack([pseudo.right, pseudo.left])
    uniq, counts = np.unique(key, axis=0, return_counts=True)
    d = pseudo.ndim
    return PseudoSample(uniq[:, :d], uniq[:, d:], pseudo.kinds), counts.astype(float)


def _weights(params) -> np.ndarray:
    return params.weights if isinstance(params, ParamTensor) else np.asarray(params, dtype=float)


def _likelihoods(w: np.ndarray, factors) -> np.ndarray:
    lik = contract(w, factors)
    if np.any(~(lik > 0)):
        raise DegenerateDensity("an observation has zero likelihood under the current weights")
    return lik


def _tau_bar(w: np.ndarray, factors, counts: np.ndarray, lik=None) -> np.ndarray:
    if lik is None:
        lik = _likelihoods(w, factors)
    scale = counts / lik
    # sum_i scale_i prod_j factors[j][i, k_j]: build row-wise outer products of
    # all but the last axis, then one matrix product with the last
    acc = scale[:, None] * factors[0]
    for f in factors[1:-1]:
        acc = (acc[:, :, None] * f[:, None, :]).reshape(len(scale), -1)
    agg = acc.T @ factors[-1] if len(factors) > 1 else acc.sum(axis=0)
    return w * agg.reshape(w.shape) / counts.sum()


def responsibilities(params, pseudo: PseudoSample) -> np.ndarray:
    """Per-observation posteriors ``tau_hat[i, k]``; each row sums to 1."""
    w = _weights(params)
    factors = axis_factors(pseudo, w.shape)
    lik = _likelihoods(w, factors)
    d = w.ndim
    letters = "abcdefghijklmnopqrstuvwxy"[:d]
    spec = ",".join("z" + c for c in letters) + "->z" + letters
    prod = np.einsum(spec, *factors)
    return w[None] * prod / lik.reshape((-1,) + (1,) * d)


def estep_continuous(params, pseudo: PseudoSample) -> np.ndarray:
    if not pseudo.all_continuous:
        raise ValueError("estep_continuous needs continuous axes only")
    w = _weights(params)
    return _tau_bar(w, axis_factors(pseudo, w.shape), np.ones(pseudo.n_obs))


def estep_mixed(params, pseudo: PseudoSample) -> np.ndarray:
    """E-step with a density factor on continuous axes and a mass factor on discrete axes."""
    w = _weights(params)
    return _tau_bar(w, axis_factors(pseudo, w.shape), np.ones(pseudo.n_obs))


def estep(params, pseudo: PseudoSample) -> np.ndarray:
    return estep_mixed(params, pseudo)


def table_factors(marginals: Sequence[MarginalModel], dims) -> list:
    """Order-statistic masses ``f_{k:n_j}(a)`` at every support point, shape ``(|A_j|, n_j)``."""
    out = []
    for m, n_j in zip(marginals, dims):
        if not m.is_discrete:
            raise ValueError("table E-step needs discrete marginals")
        hi = bernstein.cum_matrix(n_j - 1, m.cdf(m.values))
        lo = bernstein.cum_matrix(n_j - 1, m.cdf_left(m.values))
        out.append(n_j * np.clip(hi - lo, 0.0, None))
    return out


def estep_discrete(params, table, marginals: Sequence[MarginalModel]) -> np.ndarray:
    """E-step on a contingency table ``N[a_1, ..., a_d]`` over the marginal supports."""
    w = _weights(params)
    table = np.asarray(table, dtype=float)
    if table.ndim != w.ndim or any(table.shape[j] != len(m.values) for j, m in enumerate(marginals)):
        raise ValueError("table shape must match the marginal supports")
    if np.any(table < 0):
        raise ValueError("table counts must be nonnegative")
    cells = np.nonzero(table)
    counts = table[cells]
    full = table_factors(marginals, w.shape)
    factors = [full[j][cells[j]] for j in range(w.ndim)]
    return _tau_bar(w, factors, counts)


def table_loglik(params, table, marginals) -> float:
    """``sum N_a log sum_k r_k prod_j f_{k_j:n_j}(a_j)``."""
    w = _weights(params)
    table = np.asarray(table, dtype=float)
    cells = np.nonzero(table)
    full = table_factors(marginals, w.shape)
    lik = _likelihoods(w, [full[j][cells[j]] for j in range(w.ndim)])
    return float(np.sum(table[cells] * np.log(lik)))


def pseudo_loglik(params, pseudo: PseudoSample) -> float:
    """Copula-level pseudo-log-likelihood ``sum_i log L_i``."""
    w = _weights(params)
    lik = _likelihoods(w, axis_factors(pseudo, w.shape))
    return float(np.sum(np.log(lik)))


# ----------------------------------------------------------- initializer

def bin_counts(pseudo: PseudoSample, dims) -> np.ndarray:
    """Share of observations in each cell ``((k-1)/n_j, k/n_j]``; 0 joins the first cell."""
    idx = []
    for j, n_j in enumerate(dims):
        k = np.ceil(pseudo.right[:, j] * n_j - 1e-12).astype(int)
        idx.append(np.clip(k, 1, n_j) - 1)
    counts = np.zeros(tuple(dims))
    np.add.at(counts, tuple(idx), 1.0)
    return counts / pseudo.n_obs


def init_binning(pseudo: PseudoSample, dims) -> ParamTensor:
    """Binned start value, smoothed by ``1/(N prod n_j)`` per cell and projected onto the constraints.

    The projection is the M-step applied to the smoothed histogram, i.e. the
    feasible tensor closest to it in Kullback-Leibler divergence.
    """
    raw = bin_counts(pseudo, dims)
    smoothed = raw + 1.0 / (pseudo.n_obs * np.prod(dims))
    return mstep.solve(smoothed / smoothed.sum())


# ------------------------------------------------------------------ fit

@dataclass
class FitResult:
    params: ParamTensor
    loglik_trace: list
    iterations: int
    converged: bool
    n_obs: int = 0
    tau_bar: Optional[np.ndarray] = None

    @property
    def dims(self) -> tuple:
        return self.params.dims

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]

    @property
    def aic(self) -> float:
        return aic(self.loglik, self.dims)


def fit(pseudo: PseudoSample, dims, tol: float = EM_TOL, max_iter: int = EM_MAX_ITER,
        loglik_rtol: float = EM_LOGLIK_RTOL, init=None, mstep_tol: float = mstep.DEFAULT_TOL,
        strict: bool = True) -> FitResult:
    """EM for the weight tensor.

    Iterates E-step and M-step until the largest change in ``tau_bar`` falls
    below ``tol`` or the relative change of the log-likelihood below
    ``loglik_rtol``.  ``init`` is a ParamTensor or positive array; the
    default is :func:`init_binning`.  The trace holds the log-likelihood after
    every M-step.  With ``strict`` a run that hits ``max_iter`` raises
    :class:`NonConvergence` carrying the partial result.
    """
    dims = tuple(int(n) for n in dims)
    if any(n < 1 for n in dims):
        raise ValueError("dims must be positive")
    data, counts = _compress(pseudo)
    factors = axis_factors(data, dims)

    def loglik(lik):
        return float(np.sum(counts * np.log(lik)))

    if sum(n > 1 for n in dims) <= 1:
        # the constraints pin R to the uniform tensor; the likelihood equals the
        # all-ones-dims one exactly, so evaluate it there to keep it size-free
        params = ParamTensor.uniform(dims)
        base = axis_factors(data, (1,) * len(dims))
        ll = float(np.sum(counts * np.log(_likelihoods(np.ones((1,) * len(dims)), base))))
        return FitResult(params, [ll], 0, True, pseudo.n_obs, np.full(dims, 1.0 / np.prod(dims)))

    if init is None:
        w = init_binning(pseudo, dims).weights
    else:
        w = _weights(init)
        if w.shape != dims:
            raise ValueError("init has the wrong shape")

    trace = []
    tau_prev = None
    state = None
    converged = False
    it = 0
    lik = _likelihoods(w, factors)
    for it in range(1, max_iter + 1):
        tau = _tau_bar(w, factors, counts, lik)
        res = mstep.solve_detailed(tau, tol=mstep_tol, init=state)
        state = res.multipliers
        w = res.params.weights
        lik = _likelihoods(w, factors)
        trace.append(loglik(lik))
        if tau_prev is not None:
            dtau = float(np.max(np.abs(tau - tau_prev)))
            dll = abs(trace[-1] - trace[-2])
            if dtau < tol or dll <= loglik_rtol * max(1.0, abs(trace[-1])):
                converged = True
                break
        tau_prev = tau
    result = FitResult(ParamTensor(w), trace, it, converged, pseudo.n_obs, tau)
    if not converged:
        log.warning("EM stopped after %d iterations without converging", it)
        if strict:
            raise NonConvergence(f"EM did not converge in {max_iter} iterations", result=result)
    return result


def n_free_params(dims) -> int:
    """Affine dimension of the constraint polytope: ``prod n_j - sum (n_j - 1) - 1``."""
    dims = [int(n) for n in dims]
    return int(np.prod(dims)) - sum(n - 1 for n in dims) - 1


def aic(loglik: float, dims) -> float:
    return -2.0 * loglik + 2.0 * n_free_params(dims)


@dataclass
class Selection:
    best: tuple
    table: dict
    fits: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)


def default_threads() -> int:
    env = os.environ.get("BAKER_COPULA_THREADS")
    if env:
        return max(1, int(env))
    return 1


def select_aic(pseudo: PseudoSample, dims_grid, threads: Optional[int] = None, **config) -> Selection:
    """Fit every candidate size and pick the smallest AIC.

    Ties go to the smaller ``prod n_j`` and then to the lexicographically
    smaller dims.  Cells whose fit raises are recorded in ``errors`` and
    excluded; their table entry is NaN.
    """
    grid = [tuple(int(n) for n in dims) for dims in dims_grid]
    threads = threads or default_threads()
    config.setdefault("strict", False)

    def run(dims):
        try:
            return dims, fit(pseudo, dims, **config), None
        except Exception as exc:  # recorded per cell
            return dims, None, exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, grid))
    else:
        outcomes = [run(dims) for dims in grid]

    table, fits, errors = {}, {}, {}
    for dims, res, exc in outcomes:
        if exc is not None:
            table[dims] = math.nan
            errors[dims] = exc
        else:
            table[dims] = res.aic
            fits[dims] = res
    ok = [dims for dims in grid if dims in fits]
    if not ok:
        raise RuntimeError("every candidate fit failed")
    best = min(ok, key=lambda dims: (table[dims], int(np.prod(dims)), dims))
    return Selection(best, table, fits, errors)


# ------------------------------------------------------------------- H+/-

@dataclass
class HpmFit:
    sign: str
    q: float
    n: int
    loglik_trace: list
    iterations: int
    converged: bool
    degenerate: bool
    variance: Optional[float] = None

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]

    @property
    def rank_correlation(self) -> float:
        s = 1.0 if self.sign == "+" else -1.0
        return s * self.q * (self.n - 1) / (self.n + 1)

    def params(self) -> ParamTensor:
        from .copula import hpm_params

        return hpm_params(self.sign, self.q, self.n)


def _hpm_log_factors(pseudo: PseudoSample, n: int) -> list:
    """Log of the per-axis order-statistic factors divided by the marginal factor."""
    out = []
    for j in range(2):
        if pseudo.kinds[j] == CONTINUOUS:
            out.append(math.log(n) + bernstein.log_basis_matrix(n - 1, pseudo.right[:, j]))
        else:
            mass = pseudo.right[:, j] - pseudo.left[:, j]
            delta = bernstein.cum_matrix(n - 1, pseudo.right[:, j]) - bernstein.cum_matrix(
                n - 1, pseudo.left[:, j])
            with np.errstate(divide="ignore"):
                out.append(np.log(n * np.clip(delta, 0.0, None)) - np.log(mass)[:, None])
    return out


def hpm_log_density(pseudo: PseudoSample, sign: str, n: int) -> np.ndarray:
    """``log c_n^{sign}`` at every observation (mass ratio for discrete axes)."""
    if pseudo.ndim != 2:
        raise ValueError("the H+/H- family is bivariate")
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    fx, fy = _hpm_log_factors(pseudo, n)
    if sign == "-":
        fy = fy[:, ::-1]
    return logsumexp(fx + fy, axis=1) - math.log(n)


def _hpm_loglik(q: float, logc: np.ndarray, counts: np.ndarray) -> float:
    c = np.exp(logc)
    return float(np.sum(counts * np.log(1.0 - q + q * c)))


def _hpm_estep(q: float, logc: np.ndarray) -> np.ndarray:
    c = np.exp(logc)
    den = 1.0 - q + q * c
    if np.any(~(den > 0)):
        raise DegenerateDensity("an observation has zero density under the H model")
    return (1.0 - q) / den


def _weighted_objective(weight: np.ndarray, logc: np.ndarray) -> float:
    terms = np.where(weight > 0, weight * np.where(np.isfinite(logc), logc, -np.inf), 0.0)
    return float(terms.sum())


def fit_hpm(pseudo: PseudoSample, sign: str, n_max: int = HPM_N_MAX, tol: float = HPM_TOL,
            max_iter: int = HPM_MAX_ITER, strict: bool = True,
            with_variance: bool = True) -> HpmFit:
    """EM for ``(q, n)`` in ``(1 - q) * independence + q * H_n^{sign}``.

    Starts at ``(q, n) = (1/2, 1)``.  The order is chosen each M-step by
    direct search over ``1..n_max``.  Stops once ``n`` repeats and ``q``
    moves by less than ``tol``.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    data, counts = _compress(pseudo)
    logc = np.vstack([hpm_log_density(data, sign, n) for n in range(1, n_max + 1)])
    total = counts.sum()
    q, n = 0.5, 1
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        tau = _hpm_estep(q, logc[n - 1])
        q_new = 1.0 - float(np.sum(counts * tau)) / total
        weight = counts * (1.0 - tau)
        scores = [_weighted_objective(weight, logc[k]) for k in range(n_max)]
        n_new = int(np.argmax(scores)) + 1
        trace.append(_hpm_loglik(q_new, logc[n_new - 1], counts))
        done = n_new == n and abs(q_new - q) < tol
        q, n = q_new, n_new
        if done:
            converged = True
            break
    degenerate = n == 1
    result = HpmFit(sign, q, n, trace, it, converged, degenerate)
    if degenerate:
        log.warning("fitted order is 1: the model is independence and q is not identified")
    elif with_variance and pseudo.all_continuous:
        from .inference import var_qhat

        result.variance = var_qhat(sign, q, n, pseudo)
    if not converged and strict:
        raise NonConvergence(f"H{sign} EM did not converge in {max_iter} iterations", result=result)
    return result


def profile_loglik_hpm(pseudo: PseudoSample, sign: str, n: int, tol: float = 1e-12,
                       max_iter: int = 100_000) -> tuple:
    """``(q_hat(n), loglik)`` from the EM with the order held at ``n``."""
    data, counts = _compress(pseudo)
    logc = hpm_log_density(data, sign, n)
    total = counts.sum()
    q = 0.5
    for _ in range(max_iter):
        tau = _hpm_estep(q, logc)
        q_new = 1.0 - float(np.sum(counts * tau)) / total
        step = abs(q_new - q)
        q = q_new
        if step < tol:
            break
    return q, _hpm_loglik(q, logc, counts)


def profile_table(pseudo: PseudoSample, sign: str, n_values) -> list:
    """Rows ``(n, q_hat(n), loglik)``."""
    return [(int(n),) + profile_loglik_hpm(pseudo, sign, int(n)) for n in n_values]
