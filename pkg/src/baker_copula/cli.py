"""Command-line entry point: ``baker-copula <command> ...``.

Exit codes: 0 success, 2 input error, 3 non-convergence, 4 degenerate model,
5 unsupported dimensionality.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys

import numpy as np
from scipy.stats import norm

from . import bernstein, em, inference, modelio
from .copula import BakerModel, joint_density, sample
from .errors import DegenerateModel, InvalidParams
from .gaussian import GaussianCopula, SingularCorrelation, fit_gaussian, stratum_density
from .marginals import CONTINUOUS, DISCRETE, fit_continuous
from .simulate import DEFAULT_STRATA, simulate_interaction

log = logging.getLogger("baker_copula")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONCONVERGENCE = 3
EXIT_DEGENERATE = 4
EXIT_DIMENSION = 5


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- parsing

def read_csv(path):
    """Return ``(names, data)``; every cell must be a finite number."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CliError(f"{path}: empty file") from None
        names = [h.strip() for h in header]
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            line = reader.line_num
            if len(row) != len(names):
                raise CliError(f"{path}: line {line}: expected {len(names)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise CliError(f"{path}: line {line}: non-numeric cell") from None
            if not all(math.isfinite(v) for v in vals):
                raise CliError(f"{path}: line {line}: non-finite value")
            rows.append(vals)
    if len(rows) < 2:
        raise CliError(f"{path}: need at least 2 data rows")
    return names, np.array(rows, dtype=float)


def write_csv(path, header, rows):
    fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if path:
            fh.close()


def parse_int_list(text, what):
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"bad {what}: {text!r}") from None
    if any(v < 1 for v in vals):
        raise CliError(f"{what} must be positive")
    return vals


def parse_kinds(text, d):
    if text is None:
        return [CONTINUOUS] * d
    table = {"c": CONTINUOUS, "continuous": CONTINUOUS, "d": DISCRETE, "discrete": DISCRETE}
    try:
        kinds = [table[k.strip().lower()] for k in text.split(",")]
    except KeyError as exc:
        raise CliError(f"unknown kind {exc.args[0]!r}") from None
    if len(kinds) != d:
        raise CliError(f"--kinds lists {len(kinds)} kinds for {d} columns")
    return kinds


def parse_range(text):
    """``a..b`` or a single integer."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(text)]


def parse_grid_spec(text):
    """``1..10x1..10`` into the two axis ranges."""
    parts = text.lower().split("x")
    try:
        axes = [parse_range(p) for p in parts]
    except ValueError:
        raise CliError(f"bad grid {text!r}") from None
    if any(not a or min(a) < 1 for a in axes):
        raise CliError(f"bad grid {text!r}")
    return axes


def parse_strata(text):
    if text is None or text == "default":
        return list(DEFAULT_STRATA)
    out = []
    for part in text.split(","):
        try:
            lo, hi = (float(v) for v in part.split(":"))
        except ValueError:
            raise CliError(f"bad stratum {part!r}") from None
        if not 0.0 <= lo < hi <= 1.0:
            raise CliError(f"stratum {part!r} must satisfy 0 <= lo < hi <= 1")
        out.append((lo, hi))
    return out


# ---------------------------------------------------------------- helpers

def _load_pseudo(args):
    names, data = read_csv(args.input)
    kinds = parse_kinds(args.kinds, data.shape[1])
    bws = None
    if getattr(args, "bandwidth", None):
        bws = [float(b) if b else None for b in args.bandwidth.split(",")]
        if len(bws) != data.shape[1]:
            raise CliError("--bandwidth needs one value per column")
    try:
        marginals = em.fit_marginals(data, kinds, bws)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    return names, data, marginals, em.pseudo_from_data(data, marginals)


def _load_model(path):
    try:
        return modelio.read_model(path)
    except (OSError, ValueError, KeyError, TypeError, InvalidParams) as exc:
        raise CliError(f"bad model file {path}: {exc}") from exc


def _auto_range(marginal):
    if marginal.is_discrete:
        return float(marginal.values[0]), float(marginal.values[-1])
    h = marginal.bandwidth
    return float(marginal.values[0] - 3 * h), float(marginal.values[-1] + 3 * h)


def _axis_ranges(text, marginals):
    if text in (None, "auto"):
        return [_auto_range(m) for m in marginals[:2]]
    try:
        out = []
        for part in text.split(","):
            lo, hi = (float(v) for v in part.split(":"))
            out.append((lo, hi))
    except ValueError:
        raise CliError(f"bad range {text!r}") from None
    if len(out) != 2 or any(lo >= hi for lo, hi in out):
        raise CliError(f"bad range {text!r}")
    return out


def _grid_points(shape_text, ranges):
    try:
        gx, gy = (int(v) for v in shape_text.lower().split("x"))
    except ValueError:
        raise CliError(f"bad grid {shape_text!r}") from None
    if gx < 1 or gy < 1:
        raise CliError("grid sizes must be positive")
    xs = np.linspace(ranges[0][0], ranges[0][1], gx)
    ys = np.linspace(ranges[1][0], ranges[1][1], gy)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def _write_json(path, data):
    text = json.dumps(data, indent=2) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands

def cmd_fit(args):
    names, data, marginals, pseudo = _load_pseudo(args)
    dims = parse_int_list(args.dims, "--dims")
    if len(dims) != data.shape[1]:
        raise CliError(f"--dims has {len(dims)} entries for {data.shape[1]} columns")
    res = em.fit(pseudo, dims, tol=args.tol, max_iter=args.max_iter, strict=False)
    model = BakerModel(res.params, marginals)
    fit_info = {"loglik_trace": res.loglik_trace, "iterations": res.iterations,
                "converged": res.converged, "aic": res.aic}
    modelio.write_model(args.out, model, fit_info)
    print(f"columns: {', '.join(names)}")
    print(f"dims: {tuple(dims)}  N: {pseudo.n_obs}")
    print(f"iterations: {res.iterations}  converged: {str(res.converged).lower()}")
    print(f"loglik: {res.loglik:.6f}  AIC: {res.aic:.4f}")
    print(f"model written to {args.out}")
    if args.cov_out:
        if len(dims) != 2:
            raise CliError("covariance export needs a bivariate model", EXIT_DIMENSION)
        if not pseudo.all_continuous:
            raise CliError("covariance export needs continuous columns")
        cov = inference.covariance_r(res.params, pseudo)
        _write_json(args.cov_out, cov.to_dict())
        print(f"covariance written to {args.cov_out}")
    if not res.converged:
        raise CliError("EM did not converge", EXIT_NONCONVERGENCE)
    return EXIT_OK


def cmd_select(args):
    names, data, marginals, pseudo = _load_pseudo(args)
    if data.shape[1] != 2:
        raise CliError("select supports two columns", EXIT_DIMENSION)
    rows_m, cols_n = parse_grid_spec(args.grid)
    grid = [(m, n) for m in rows_m for n in cols_n]
    sel = em.select_aic(pseudo, grid, threads=args.threads, tol=args.tol, max_iter=args.max_iter)
    table = [[m] + [("NA" if math.isnan(sel.table[(m, n)]) else repr(sel.table[(m, n)]))
                    for n in cols_n] for m in rows_m]
    write_csv(args.out, ["m"] + [str(n) for n in cols_n], table)
    for dims, exc in sel.errors.items():
        log.warning("cell %s failed: %s", dims, exc)
    print(f"best dims: {sel.best}  AIC: {sel.table[sel.best]:.4f}",
          file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_fit_hpm(args):
    names, data, marginals, pseudo = _load_pseudo(args)
    if data.shape[1] != 2:
        raise CliError("the H+/H- family needs two columns", EXIT_DIMENSION)
    sign = args.sign
    res = em.fit_hpm(pseudo, sign, n_max=args.n_max, tol=args.tol, max_iter=args.max_iter,
                     strict=False)
    out = {"sign": sign, "q": res.q, "n": res.n, "loglik": res.loglik,
           "rank_correlation": res.rank_correlation, "variance_q": res.variance,
           "iterations": res.iterations, "converged": res.converged,
           "degenerate": res.degenerate}
    if args.profile:
        rows = em.profile_table(pseudo, sign, range(1, args.n_max + 1))
        out["profile"] = [{"n": n, "q": q, "loglik": ll} for n, q, ll in rows]
        if args.profile_out:
            write_csv(args.profile_out, ["n", "q_hat", "loglik"], rows)
    _write_json(args.out, out)
    if args.out:
        print(f"q = {res.q:.6f}  n = {res.n}  rank correlation = {res.rank_correlation:.6f}")
    if res.degenerate:
        raise CliError("fitted order is 1 (independence); q is not identified", EXIT_DEGENERATE)
    if not res.converged:
        raise CliError("EM did not converge", EXIT_NONCONVERGENCE)
    return EXIT_OK


def cmd_sample(args):
    model, _ = _load_model(args.model)
    if args.count < 0:
        raise CliError("--count must be nonnegative")
    draws = sample(model, args.count, seed=args.seed)
    header = [f"x{j + 1}" for j in range(model.params.ndim)]
    write_csv(args.out, header, draws.tolist())
    return EXIT_OK


def _stratified_rows(model, pts, strata):
    """Conditional density of the first two variables given the third in each stratum."""
    w = model.params.weights
    n1, n2, n3 = w.shape
    m1, m2 = model.marginals[0], model.marginals[1]
    u, v = m1.cdf(pts[:, 0]), m2.cdf(pts[:, 1])
    fx = n1 * bernstein.basis_matrix(n1 - 1, u)
    fy = n2 * bernstein.basis_matrix(n2 - 1, v)
    scale = m1.pdf(pts[:, 0]) * m2.pdf(pts[:, 1])
    rows = []
    for s, (lo, hi) in enumerate(strata):
        mass = n3 * (bernstein.cum_matrix(n3 - 1, np.array([hi]))
                     - bernstein.cum_matrix(n3 - 1, np.array([lo])))[0] / (hi - lo)
        dens = np.einsum("klm,pk,pl,m->p", w, fx, fy, mass) * scale
        rows.extend([s, x, y, d] for (x, y), d in zip(pts.tolist(), dens.tolist()))
    return rows


def cmd_density(args):
    model, _ = _load_model(args.model)
    d = model.params.ndim
    if model.marginals is None or any(m.is_discrete for m in model.marginals):
        raise CliError("density grids need continuous marginals")
    if args.stratify is not None:
        if d != 3:
            raise CliError("--stratify needs a three-variable model", EXIT_DIMENSION)
        pts = _grid_points(args.grid, _axis_ranges(args.range, model.marginals))
        rows = _stratified_rows(model, pts, parse_strata(args.stratify))
        write_csv(args.out, ["stratum", "x", "y", "density"], rows)
        return EXIT_OK
    if d != 2:
        raise CliError("density grids need a bivariate model", EXIT_DIMENSION)
    pts = _grid_points(args.grid, _axis_ranges(args.range, model.marginals))
    dens = joint_density(model, pts)
    header = ["x", "y", "density"]
    cols = [pts[:, 0], pts[:, 1], dens]
    if args.variance:
        try:
            with open(args.variance, encoding="utf-8") as fh:
                cov = inference.CovarianceEstimate.from_dict(json.load(fh))
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"bad covariance file: {exc}") from exc
        if tuple(cov.dims) != model.params.dims:
            raise CliError("covariance dims do not match the model")
        header.append("variance")
        cols.append(inference.var_density_at(model.params, cov, pts, model.marginals))
    write_csv(args.out, header, np.column_stack(cols).tolist())
    return EXIT_OK


def cmd_simulate3d(args):
    if args.n1 != args.n2:
        raise CliError("--n1 and --n2 must be equal")
    if args.n3 != 2:
        raise CliError("--n3 must be 2")
    data = simulate_interaction(args.n1, args.n2, args.n3, args.count, seed=args.seed)
    write_csv(args.out, ["x", "y", "z"], data.tolist())
    return EXIT_OK


def cmd_fit_gaussian(args):
    names, data = read_csv(args.input)
    try:
        cop = fit_gaussian(data)
    except SingularCorrelation as exc:
        raise CliError(str(exc)) from exc
    out = {"columns": names}
    out.update(cop.to_dict())
    strata = parse_strata(args.stratify)
    if cop.ndim >= 3:
        rho = cop.conditional_correlation((0, 1), 2)
        out["strata"] = [{"lo": lo, "hi": hi, "conditional_correlation": rho} for lo, hi in strata]
    _write_json(args.out, out)
    if args.grid_out:
        if cop.ndim < 3:
            raise CliError("conditional grids need three columns", EXIT_DIMENSION)

        margs = [fit_continuous(data[:, j]) for j in range(2)]
        pts = _grid_points(args.grid, _axis_ranges(args.range, margs))
        # kernel-smoothed CDF keeps normal scores finite outside the sample range
        u, v = (norm.cdf((pts[:, j, None] - m.values) / m.bandwidth).mean(axis=1)
                for j, m in enumerate(margs))
        scale = margs[0].pdf(pts[:, 0]) * margs[1].pdf(pts[:, 1])
        sub = GaussianCopula(cop.corr[:3, :3])
        rows = []
        for s, (lo, hi) in enumerate(strata):
            dens = stratum_density(sub, u, v, lo, hi) * scale
            rows.extend([s, x, y, dd] for (x, y), dd in zip(pts.tolist(), dens.tolist()))
        write_csv(args.grid_out, ["stratum", "x", "y", "density"], rows)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="baker-copula",
                                description="Bernstein copula estimation tools")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a Bernstein copula model by EM")
    f.add_argument("input")
    f.add_argument("--dims", required=True, help="comma-separated sizes, e.g. 2,3")
    f.add_argument("--kinds", help="c/d per column (default: all continuous)")
    f.add_argument("--bandwidth", help="comma-separated kernel bandwidth overrides")
    f.add_argument("--tol", type=float, default=em.EM_TOL)
    f.add_argument("--max-iter", type=int, default=em.EM_MAX_ITER)
    f.add_argument("--out", default="model.json")
    f.add_argument("--cov-out", help="write the weight covariance estimate (JSON)")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("select", help="AIC over a grid of sizes")
    s.add_argument("input")
    s.add_argument("--grid", default="1..10x1..10")
    s.add_argument("--kinds")
    s.add_argument("--tol", type=float, default=em.EM_TOL)
    s.add_argument("--max-iter", type=int, default=em.EM_MAX_ITER)
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out", help="AIC table CSV (default: stdout)")
    s.set_defaults(func=cmd_select)

    h = sub.add_parser("fit-hpm", help="fit the H+ or H- subfamily")
    h.add_argument("input")
    h.add_argument("--sign", choices=["+", "-"], default="+")
    h.add_argument("--kinds")
    h.add_argument("--n-max", type=int, default=em.HPM_N_MAX)
    h.add_argument("--tol", type=float, default=em.HPM_TOL)
    h.add_argument("--max-iter", type=int, default=em.HPM_MAX_ITER)
    h.add_argument("--profile", action="store_true", help="add the fixed-order profile table")
    h.add_argument("--profile-out", help="profile table CSV")
    h.add_argument("--out", help="result JSON (default: stdout)")
    h.set_defaults(func=cmd_fit_hpm)

    sm = sub.add_parser("sample", help="draw from a fitted model")
    sm.add_argument("model")
    sm.add_argument("--count", type=int, default=1000)
    sm.add_argument("--seed", type=int, default=None)
    sm.add_argument("--out", help="CSV (default: stdout)")
    sm.set_defaults(func=cmd_sample)

    dn = sub.add_parser("density", help="joint density on a grid")
    dn.add_argument("model")
    dn.add_argument("--grid", default="100x100")
    dn.add_argument("--range", default="auto", help="auto or x0:x1,y0:y1")
    dn.add_argument("--variance", help="covariance JSON from fit --cov-out")
    dn.add_argument("--stratify", nargs="?", const="default",
                    help="strata of the third variable's quantile level, e.g. 0:0.1,0.9:1")
    dn.add_argument("--out", help="CSV (default: stdout)")
    dn.set_defaults(func=cmd_density)

    sim = sub.add_parser("simulate3d", help="three-way interaction dataset")
    sim.add_argument("--n1", type=int, default=20)
    sim.add_argument("--n2", type=int, default=20)
    sim.add_argument("--n3", type=int, default=2)
    sim.add_argument("--count", type=int, default=2000)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", help="CSV (default: stdout)")
    sim.set_defaults(func=cmd_simulate3d)

    g = sub.add_parser("fit-gaussian", help="Gaussian copula baseline")
    g.add_argument("input")
    g.add_argument("--out", help="JSON (default: stdout)")
    g.add_argument("--stratify", default=None)
    g.add_argument("--grid", default="100x100")
    g.add_argument("--range", default="auto")
    g.add_argument("--grid-out", help="stratified conditional density grid CSV")
    g.set_defaults(func=cmd_fit_gaussian)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DegenerateModel as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
