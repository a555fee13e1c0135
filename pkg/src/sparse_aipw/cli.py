"""Command-line entry point: ``sparse-aipw {simulate,estimate,select}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import IncompleteDataset
from .estimators import prop_estimate
from .exceptions import (
    ConvergenceError,
    DegenerateInputError,
    DimensionError,
    DomainError,
    NumericalError,
)
from .harness import ESTIMATORS, ExperimentPlan, run_experiment
from .kernels import DEFAULT_RIDGE, KernelConfig, fit_krr, gradient_norms, kernel_matrix, median_bandwidth
from .selection import ThresholdSearchConfig, select_active, stability_threshold
from .simulate import DESIGNS, SIZES

log = logging.getLogger("sparse_aipw")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MISSING = {"", "NA"}


class DataError(Exception):
    pass


def _split_list(values):
    out = []
    for v in values:
        out.extend(s for s in v.split(",") if s)
    return out


def read_table(path, response_col):
    """Read a headed CSV into covariates, response (NaN where missing) and names."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if response_col not in header:
        raise DataError(f"{path}: no column named {response_col!r}")
    ri = header.index(response_col)
    names = [h for j, h in enumerate(header) if j != ri]
    body = rows[1:]
    x = np.empty((len(body), len(names)))
    y = np.empty(len(body))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        k = 0
        for j, cell in enumerate(row):
            cell = cell.strip()
            if j == ri:
                y[i - 2] = np.nan if cell in MISSING else _number(cell, path, i, header[j])
            else:
                x[i - 2, k] = _number(cell, path, i, header[j])
                k += 1
    return x, y, names


def _number(cell, path, row, col):
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"{path}: row {row}, column {col!r}: non-numeric value {cell!r}") from None
    if not np.isfinite(v):
        raise DataError(f"{path}: row {row}, column {col!r}: non-finite value")
    return v


def studentize(x, y):
    """Center and scale covariate columns over all rows, the response over observed rows."""
    sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.ones(x.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    x = (x - x.mean(axis=0)) / sd
    obs = np.isfinite(y)
    y = y.copy()
    if obs.sum() > 1:
        ysd = y[obs].std(ddof=1)
        y[obs] = (y[obs] - y[obs].mean()) / (ysd if ysd > 0 else 1.0)
    return x, y


def _load(args):
    x, y, names = read_table(args.input, args.response_col)
    if not np.any(np.isfinite(y)):
        raise DomainError("every response is missing")
    if args.studentize:
        x, y = studentize(x, y)
    return x, y, names


def _write(text, out):
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _lam2(value):
    if value == "auto":
        return value
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError("--lambda2 takes 'auto' or a number") from None
    if v < 0:
        raise argparse.ArgumentTypeError("--lambda2 must be nonnegative")
    return v


def cmd_simulate(args):
    designs = _split_list(args.designs)
    sizes = _split_list(args.sizes)
    estimators = _split_list(args.estimators)
    for d in designs:
        if d not in DESIGNS:
            raise _Usage(f"unknown design {d!r}; choose from {', '.join(DESIGNS)}")
    for s in sizes:
        if s not in SIZES:
            raise _Usage(f"unknown size {s!r}; choose from {', '.join(SIZES)}")
    for e in estimators:
        if e not in ESTIMATORS:
            raise _Usage(f"unknown estimator {e!r}; choose from {', '.join(ESTIMATORS)}")
    m = 500 if args.full else args.M
    plan = ExperimentPlan.grid(designs, sizes, replicates=m, estimators=tuple(estimators),
                               base_seed=args.seed, ridge=args.ridge, lam2=args.lambda2,
                               clamp_propensity=args.clamp_propensity, workers=args.workers,
                               theta_source=args.theta_source, ci_scale=args.ci_scale)
    table = run_experiment(plan)
    _write(table.render(args.format), args.out)
    return EXIT_OK


def cmd_estimate(args):
    x, y, names = _load(args)
    delta = np.isfinite(y).astype(int)
    data = IncompleteDataset(x, np.nan_to_num(y), delta)
    search = ThresholdSearchConfig(rng_seed=args.seed)
    est = prop_estimate(data, search, ridge=args.ridge, lam2=args.lambda2,
                        clamp_propensity=args.clamp_propensity)
    pm = est.diagnostics["propensity"]
    report = {
        "theta_hat": est.theta_hat,
        "sigma2_hat": est.sigma2_hat,
        "std_error": est.std_error,
        "ci95": [est.ci_low, est.ci_high],
        "n": data.n,
        "n_observed": data.n_observed,
        "response_rate": est.response_rate,
        "selected_covariates": [names[j] for j in est.diagnostics["active_set"]],
        "threshold": est.diagnostics["threshold"],
        "no_signal": bool(est.diagnostics["no_signal"]),
        "propensity_nonzero": [] if pm is None else [names[j] for j in pm.nonzero_groups()],
        "propensity_penalty": None if pm is None else pm.penalty,
        "propensity_converged": bool(est.diagnostics["propensity_converged"]),
    }
    _write(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_select(args):
    x, y, names = _load(args)
    obs = np.isfinite(y)
    xo, yo = x[obs], y[obs]
    if xo.shape[0] < 4:
        raise DegenerateInputError("selection needs at least 4 complete cases")
    cfg = KernelConfig(median_bandwidth(xo), args.ridge)
    kmat = kernel_matrix(xo, cfg.bandwidth)
    norms = gradient_norms(fit_krr(xo, yo, cfg, kmat=kmat), kmat=kmat)
    res = stability_threshold(xo, yo, cfg, ThresholdSearchConfig(rng_seed=args.seed),
                              norms=norms, kmat=kmat)
    active = [] if res.no_signal else list(select_active(norms, res.threshold).indices)
    report = {
        "gradient_norms": [float(v) for v in norms],
        "covariates": names,
        "threshold": res.threshold,
        "no_signal": bool(res.no_signal),
        "active": [j + 1 for j in active],
        "active_names": [names[j] for j in active],
        "bandwidth": cfg.bandwidth,
    }
    _write(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_OK


class _Usage(Exception):
    pass


def build_parser():
    p = argparse.ArgumentParser(prog="sparse-aipw", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--lambda", dest="ridge", type=float, default=DEFAULT_RIDGE,
                        help="kernel ridge parameter (default 0.001)")
        sp.add_argument("--out", default=None, help="output path (default stdout)")

    sim = sub.add_parser("simulate", help="Monte Carlo tables over designs C1-C4 and sizes I-IV")
    sim.add_argument("--designs", nargs="+", default=["C1"])
    sim.add_argument("--sizes", nargs="+", default=["I"])
    sim.add_argument("--M", type=int, default=100, help="replicates per cell (default 100)")
    sim.add_argument("--full", action="store_true", help="use M=500")
    sim.add_argument("--estimators", nargs="+", default=list(ESTIMATORS))
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--lambda2", type=_lam2, default="auto")
    sim.add_argument("--clamp-propensity", action="store_true")
    sim.add_argument("--theta-source", choices=["oracle_sample", "analytic"], default="oracle_sample")
    sim.add_argument("--ci-scale", choices=["sqrt_n", "raw"], default="sqrt_n")
    sim.add_argument("--format", choices=["csv", "md", "json"], default="csv")
    common(sim)
    sim.set_defaults(func=cmd_simulate)

    for name, func, text in (("estimate", cmd_estimate, "AIPW estimate of the response mean"),
                             ("select", cmd_select, "gradient-based covariate selection")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--input", required=True)
        sp.add_argument("--response-col", required=True)
        sp.add_argument("--studentize", action="store_true")
        sp.add_argument("--seed", type=int, default=0)
        if name == "estimate":
            sp.add_argument("--lambda2", type=_lam2, default="auto")
            sp.add_argument("--clamp-propensity", action="store_true")
        sp.add_argument("--format", choices=["json"], default="json")
        common(sp)
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError, DegenerateInputError, DimensionError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
