"""Constrained M-step: maximize ``sum tau_bar * log r`` over uniform-marginal tensors.

Stationarity of the Lagrangian gives ``r_k = tau_bar_k / sum_j mu^(j)_{k_j}``
with one multiplier vector per axis.  The multipliers are found by cycling
over the axes, solving each level's scalar equation
``sum_k tau_bar_k / (s_k + lambda) = 1 / n_j`` on ``lambda > -min s_k`` (the
left-hand side decreases strictly there), and then recentering to remove the
additive redundancy between axes.  For two axes this is exactly the
row/column alternation with a fixed row-multiplier sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .copula import ParamTensor, axis_sums, constraint_residual
from .errors import BracketFailure, InvalidTauBar, NonConvergence

DEFAULT_TOL = 1e-10
DEFAULT_MAX_OUTER = 10_000
INNER_TOL = 1e-14
INNER_RTOL = 1e-15


@dataclass
class MultiplierState:
    """One multiplier vector per axis."""

    vectors: List[np.ndarray]

    def total(self) -> np.ndarray:
        """``sum_j mu^(j)_{k_j}`` broadcast to the full tensor shape."""
        dims = tuple(len(v) for v in self.vectors)
        out = np.zeros(dims)
        for j, v in enumerate(self.vectors):
            shape = [1] * len(dims)
            shape[j] = len(v)
            out = out + v.reshape(shape)
        return out

    def copy(self) -> "MultiplierState":
        return MultiplierState([v.copy() for v in self.vectors])


@dataclass
class MStepResult:
    params: ParamTensor
    multipliers: MultiplierState
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def validate_tau_bar(tau_bar) -> np.ndarray:
    t = np.array(tau_bar, dtype=float)
    if t.ndim == 0:
        t = t.reshape(1)
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise InvalidTauBar("tau_bar entries must be finite and nonnegative")
    if abs(t.sum() - 1.0) > 1e-8:
        raise InvalidTauBar(f"tau_bar must sum to 1, got {t.sum():.12g}")
    for j in range(t.ndim):
        other = tuple(a for a in range(t.ndim) if a != j)
        slice_mass = t.sum(axis=other) if other else t
        if np.any(slice_mass <= 0):
            raise InvalidTauBar(f"an entire slice along axis {j} is zero")
    return t


def inner_bisect(residual_fn: Callable[[float], float], lower_open: float,
                 tol: float = INNER_TOL) -> float:
    """Root of a strictly decreasing function on ``(lower_open, inf)`` by bisection.

    The bracket is grown geometrically from ``lower_open + 1``.
    """
    step = 1.0
    hi = lower_open + step
    for _ in range(200):
        r_hi = residual_fn(hi)
        if r_hi <= 0:
            break
        step *= 2.0
        hi = lower_open + step
    else:
        raise BracketFailure("no sign change within 200 doublings")
    if abs(r_hi) < tol:
        return hi
    lo = lower_open
    mid = hi
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        r = residual_fn(mid)
        if abs(r) < tol:
            return mid
        if r > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= INNER_RTOL * max(1.0, abs(mid)):
            break
    return mid


def _solve_levels(t: np.ndarray, s: np.ndarray, target: float, start: np.ndarray) -> np.ndarray:
    """Solve ``sum_k t[a,k] / (s[a,k] + lam_a) = target`` for every row ``a``.

    Bisection safeguarded with Newton steps: the function is convex and
    decreasing, so Newton from the left of the root is monotone, and any
    step leaving the current bracket is replaced by the midpoint.
    """
    pos = t > 0
    s_pos = np.where(pos, s, np.inf)
    lo = -s_pos.min(axis=1)
    hi = lo + t.sum(axis=1) / target
    x = np.where((start > lo) & (start < hi), start, 0.5 * (lo + hi))
    for _ in range(200):
        denom = np.where(pos, s + x[:, None], 1.0)
        f = np.where(pos, t / denom, 0.0).sum(axis=1) - target
        fp = -np.where(pos, t / denom**2, 0.0).sum(axis=1)
        lo = np.where(f > 0, x, lo)
        hi = np.where(f < 0, x, hi)
        newton = x - f / fp
        inside = (newton > lo) & (newton < hi)
        x_new = np.where(inside, newton, 0.5 * (lo + hi))
        x_new = np.where(f == 0, x, x_new)
        done = (np.abs(x_new - x) <= INNER_RTOL * np.maximum(1.0, np.abs(x))) | (np.abs(f) < INNER_TOL)
        x = x_new
        if np.all(done):
            break
    return x


def _residuals(t: np.ndarray, total: np.ndarray) -> np.ndarray:
    r = np.where(t > 0, t / np.where(t > 0, total, 1.0), 0.0)
    return np.concatenate([axis_sums(r, j) - 1.0 / n for j, n in enumerate(t.shape)])


def _recenter(state: MultiplierState, init_sums) -> None:
    """Shift axes ``0..d-2`` back to their initial sums; the last axis absorbs the total."""
    d = len(state.vectors)
    shift_total = 0.0
    for j in range(d - 1):
        c = (init_sums[j] - state.vectors[j].sum()) / len(state.vectors[j])
        state.vectors[j] = state.vectors[j] + c
        shift_total += c
    state.vectors[d - 1] = state.vectors[d - 1] - shift_total


def _newton_candidate(t: np.ndarray, state: MultiplierState) -> Optional[MultiplierState]:
    """One Newton step on all multipliers jointly, or None if it leaves the domain.

    The Jacobian of the axis-sum residuals is singular along the shifts that
    leave every ``sum_j mu^(j)`` unchanged; the least-squares step has no
    component there.
    """
    dims = t.shape
    total = state.total()
    pos = t > 0
    c = np.where(pos, t / np.where(pos, total, 1.0) ** 2, 0.0)
    offsets = np.concatenate([[0], np.cumsum(dims)])
    size = offsets[-1]
    jac = np.zeros((size, size))
    for a in range(len(dims)):
        for b in range(len(dims)):
            sl = (slice(offsets[a], offsets[a + 1]), slice(offsets[b], offsets[b + 1]))
            if a == b:
                jac[sl] = -np.diag(axis_sums(c, a))
            else:
                other = tuple(x for x in range(len(dims)) if x not in (a, b))
                block = c.sum(axis=other) if other else c
                jac[sl] = -(block if a < b else block.T)
    step = np.linalg.lstsq(jac, -_residuals(t, total), rcond=None)[0]
    cand = MultiplierState([v + step[offsets[j]:offsets[j + 1]] for j, v in enumerate(state.vectors)])
    if np.any(cand.total()[pos] <= 0):
        return None
    return cand


def _weights_from(t: np.ndarray, state: MultiplierState) -> np.ndarray:
    total = state.total()
    return np.where(t > 0, t / np.where(t > 0, total, 1.0), 0.0)


def solve_detailed(tau_bar, tol: float = DEFAULT_TOL, max_outer: int = DEFAULT_MAX_OUTER,
                   init: Optional[MultiplierState] = None, record: bool = False,
                   newton: bool = True) -> MStepResult:
    """Run the multiplier iteration and return weights, multipliers and diagnostics.

    ``init`` warm-starts the multipliers; by default every entry is ``1/d``.
    With ``record=True`` the multipliers after every outer iteration are kept
    in ``history``.  With ``newton`` each sweep is followed by a trial Newton
    step on the joint system, kept only if it lowers the constraint residual;
    the fixed point is the same, but near-boundary problems (where the plain
    sweeps contract slowly) finish in a few sweeps.
    """
    t = validate_tau_bar(tau_bar)
    dims = t.shape
    d = t.ndim
    if init is None:
        state = MultiplierState([np.full(n, 1.0 / d) for n in dims])
    else:
        state = init.copy()
    init_sums = [v.sum() for v in state.vectors]
    history = [state.copy()] if record else []

    def finish(iterations, resid):
        w = _weights_from(t, state)
        return MStepResult(ParamTensor(w, check=False), state, iterations, resid, history)

    w = _weights_from(t, state)
    resid = constraint_residual(w) if np.all(np.isfinite(w)) else np.inf
    if resid < tol and init is not None:
        return finish(0, resid)
    if d == 1:
        state.vectors[0] = dims[0] * t
        return finish(0, 0.0)

    for it in range(1, max_outer + 1):
        for j in reversed(range(d)):
            others = state.total() - _axis_broadcast(state.vectors[j], j, dims)
            t_j = np.moveaxis(t, j, 0).reshape(dims[j], -1)
            s_j = np.moveaxis(others, j, 0).reshape(dims[j], -1)
            state.vectors[j] = _solve_levels(t_j, s_j, 1.0 / dims[j], state.vectors[j])
        _recenter(state, init_sums)
        w = _weights_from(t, state)
        resid = constraint_residual(w)
        if newton and resid >= tol:
            cand = _newton_candidate(t, state)
            if cand is not None:
                w_c = _weights_from(t, cand)
                resid_c = constraint_residual(w_c)
                if resid_c < resid:
                    state.vectors[:] = cand.vectors
                    _recenter(state, init_sums)
                    w, resid = w_c, resid_c
        if record:
            history.append(state.copy())
        if resid < tol:
            return finish(it, resid)
    result = finish(max_outer, resid)
    raise NonConvergence(
        f"M-step did not reach residual {tol:g} in {max_outer} iterations (residual {resid:.3g})",
        result=result, residual=resid,
    )


def _axis_broadcast(v: np.ndarray, j: int, dims) -> np.ndarray:
    shape = [1] * len(dims)
    shape[j] = len(v)
    return np.broadcast_to(v.reshape(shape), dims)


def solve(tau_bar, tol: float = DEFAULT_TOL, max_outer: int = DEFAULT_MAX_OUTER) -> ParamTensor:
    """Maximizer of ``sum tau_bar log r`` subject to uniform axis marginals."""
    return solve_detailed(tau_bar, tol=tol, max_outer=max_outer).params


def rate_bound(tau_bar, solution: MultiplierState) -> float:
    """Local linear convergence rate of the bivariate multiplier iteration.

    With ``c_kl = tau_bar_kl / (mu_k + lambda_l)^2``, ``G`` and ``H`` the
    diagonal row and column sums of ``C``, this is the second largest
    eigenvalue of ``D D'`` where ``D = G^{-1/2} C H^{-1/2}``.  The largest
    eigenvalue is always 1.
    """
    t = np.asarray(tau_bar, dtype=float)
    if t.ndim != 2 or len(solution.vectors) != 2:
        raise ValueError("rate_bound is defined for bivariate tensors only")
    mu, lam = solution.vectors
    total = mu[:, None] + lam[None, :]
    if np.any(total <= 0):
        raise ValueError("solution is not interior: some mu_k + lambda_l <= 0")
    c = t / total**2
    g = c.sum(axis=1)
    h = c.sum(axis=0)
    dmat = c / np.sqrt(g)[:, None] / np.sqrt(h)[None, :]
    eig = np.sort(np.linalg.eigvalsh(dmat @ dmat.T))[::-1]
    if eig.size < 2:
        return 0.0
    return float(np.clip(eig[1], 0.0, 1.0))
