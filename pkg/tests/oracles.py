"""Independent reference implementations used only by the tests."""

import numpy as np


def constraint_matrix(dims):
    """Rows of ``A`` with ``A r = b`` encoding the uniform-marginal sums of a 2-d tensor."""
    m, n = dims
    return np.vstack([np.kron(np.eye(m), np.ones((1, n))), np.kron(np.ones((1, m)), np.eye(n))])


def newton_maximizer(tau_bar, iters=200):
    """Maximize ``sum t log r`` over ``A r = b`` by equality-constrained Newton steps.

    Works on the flattened weights from the feasible uniform start; a
    backtracking line search keeps every entry positive and the objective
    increasing.  Only for strictly positive ``tau_bar``.
    """
    t = np.asarray(tau_bar, dtype=float)
    m, n = t.shape
    A = constraint_matrix((m, n))
    tv = t.ravel()
    r = np.full(m * n, 1.0 / (m * n))

    def obj(x):
        return float(np.sum(tv * np.log(x)))

    k = A.shape[0]
    for _ in range(iters):
        grad = tv / r
        hess = tv / r**2
        kkt = np.zeros((m * n + k, m * n + k))
        kkt[: m * n, : m * n] = np.diag(hess)
        kkt[: m * n, m * n:] = A.T
        kkt[m * n:, : m * n] = A
        rhs = np.concatenate([grad, np.zeros(k)])
        step = np.linalg.lstsq(kkt, rhs, rcond=None)[0][: m * n]
        alpha = 1.0
        while np.any(r + alpha * step <= 0) or obj(r + alpha * step) < obj(r) - 1e-15:
            alpha *= 0.5
            if alpha < 1e-12:
                break
        r = r + alpha * step
        if np.max(np.abs(alpha * step)) < 1e-15:
            break
    return r.reshape(m, n), obj(r)


def random_feasible(rng, dims, sweeps=500):
    """Strictly positive tensor with uniform axis sums, via proportional fitting."""
    w = rng.uniform(0.05, 1.0, size=dims)
    for _ in range(sweeps):
        for j, n_j in enumerate(dims):
            other = tuple(a for a in range(len(dims)) if a != j)
            s = w.sum(axis=other)
            shape = [1] * len(dims)
            shape[j] = n_j
            w = w / (n_j * s).reshape(shape)
    return w


def naive_upper_sums(keys, values):
    """O(N^2) reference for ``sum_{j : keys[i] <= keys[j]} values[j]``."""
    keys = np.asarray(keys)
    return np.array([values[keys[i] <= keys].sum(axis=0) for i in range(len(keys))])


def measured_contraction(history, fixed):
    """Geometric-mean ratio of successive multiplier errors over the tail of a run."""
    errs = []
    for state in history:
        mu, lam = state.vectors
        errs.append(np.sqrt(np.sum((mu - fixed.vectors[0]) ** 2) + np.sum((lam - fixed.vectors[1]) ** 2)))
    errs = np.array(errs)
    usable = np.nonzero(errs > 1e-11)[0]
    if len(usable) < 4:
        return 0.0
    tail = usable[len(usable) // 2:]
    if len(tail) < 2:
        return 0.0
    lo, hi = tail[0], tail[-1]
    return float((errs[hi] / errs[lo]) ** (1.0 / (hi - lo)))
