"""Monte Carlo replication of the simulation tables.

Every replicate draws its data and its stability-split stream from
``(base_seed, design, size, replicate)`` alone, so results do not depend on
how many worker processes run them or in which order they finish.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from .estimators import (
    Z95,
    cc_estimate,
    di_estimate,
    fit_full_krr,
    naipw_estimate,
    prop_estimate,
    ps_estimate,
)
from .exceptions import SparseAipwError
from .kernels import DEFAULT_RIDGE
from .propensity import BcgdConfig, fit_logistic_mle
from .selection import ThresholdSearchConfig
from .simulate import DESIGNS, SIZES, SimulationSpec, generate, true_theta

ESTIMATORS = ("CC", "PS", "DI", "NAIPW", "PROP")
FAIL_LIMIT = 10.0


@dataclass(frozen=True)
class ExperimentPlan:
    cells: tuple[tuple[str, str], ...]
    replicates: int = 100
    estimators: tuple[str, ...] = ESTIMATORS
    base_seed: int = 0
    theta_source: str = "oracle_sample"
    ridge: float = DEFAULT_RIDGE
    lam2: float | str = "auto"
    clamp_propensity: bool = False
    ci_scale: str = "sqrt_n"
    grid_size: int = 50
    n_splits: int = 20
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 2:
            raise ValueError("need at least two replicates")
        if not self.estimators:
            raise ValueError("empty estimator set")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ValueError(f"unknown estimators {bad}")
        for design, size in self.cells:
            if design not in DESIGNS or size not in SIZES:
                raise ValueError(f"unknown cell {design}/{size}")
        if self.ci_scale not in ("sqrt_n", "raw"):
            raise ValueError("ci_scale must be 'sqrt_n' or 'raw'")

    @classmethod
    def grid(cls, designs, sizes, **kw) -> "ExperimentPlan":
        return cls(tuple((d, s) for d in designs for s in sizes), **kw)


@dataclass
class CellMetrics:
    design: str
    size: str
    estimator: str
    bias: float
    se: float
    rb: float | None
    cr: float | None
    converged: int
    failures: int

    @property
    def failed(self) -> bool:
        return (self.converged == 0 or not math.isfinite(self.bias) or not math.isfinite(self.se)
                or abs(self.bias) > FAIL_LIMIT or abs(self.se) > FAIL_LIMIT)


@dataclass
class MetricsTable:
    rows: list[CellMetrics]
    replicates: int
    theta: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def cell(self, design, size, estimator) -> CellMetrics:
        for r in self.rows:
            if (r.design, r.size, r.estimator) == (design, size, estimator):
                return r
        raise KeyError((design, size, estimator))

    def records(self) -> list[dict]:
        out = []
        for r in self.rows:
            rec = {"design": r.design, "size": r.size, "estimator": r.estimator}
            if r.failed:
                rec.update(bias="-", se="-")
            else:
                rec.update(bias=_fmt(r.bias), se=_fmt(r.se))
            rec.update(rb=_fmt(r.rb), cr=_fmt(r.cr), converged=r.converged, failures=r.failures)
            out.append(rec)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        recs = self.records()
        w = csv.DictWriter(buf, fieldnames=list(recs[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(recs)
        return buf.getvalue()

    def to_markdown(self) -> str:
        recs = self.records()
        cols = list(recs[0])
        lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
        lines += ["| " + " | ".join(str(r[c]) for c in cols) + " |" for r in recs]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {"replicates": self.replicates,
                   "theta": {k: _fmt(v) for k, v in sorted(self.theta.items())},
                   "cells": self.records()}
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"

    def render(self, fmt: str) -> str:
        return {"csv": self.to_csv, "md": self.to_markdown, "json": self.to_json}[fmt]()


def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "-"
    return f"{v:.6f}"


class Replicate(NamedTuple):
    estimates: dict
    converged: dict
    sigma2: float
    n: int


def replicate_seed(base_seed: int, design: str, size: str, rep: int) -> tuple[int, ...]:
    return (int(base_seed), list(DESIGNS).index(design), list(SIZES).index(size), int(rep))


def run_replicate(plan: ExperimentPlan, design: str, size: str, rep: int) -> Replicate:
    seed = replicate_seed(plan.base_seed, design, size, rep)
    sim = generate(SimulationSpec.from_labels(design, size, seed))
    data = sim.data
    est, ok = {}, {}
    sigma2 = math.nan
    want = set(plan.estimators)
    f_full = mle = None
    if want & {"DI", "NAIPW"}:
        f_full = fit_full_krr(*data.complete_cases(), ridge=plan.ridge)
    if want & {"PS", "NAIPW"}:
        mle = fit_logistic_mle(data.x, data.delta)
    for name in plan.estimators:
        try:
            if name == "CC":
                rep_ = cc_estimate(data)
            elif name == "PS":
                rep_ = ps_estimate(data, mle)
            elif name == "DI":
                rep_ = di_estimate(data, f_full)
            elif name == "NAIPW":
                rep_ = naipw_estimate(data, f_full, mle)
            else:
                split_seed = int(np.random.SeedSequence(seed).generate_state(1)[0])
                search = ThresholdSearchConfig(plan.grid_size, plan.n_splits, rng_seed=split_seed)
                a = prop_estimate(data, search, BcgdConfig(), plan.ridge, plan.lam2,
                                  clamp_propensity=plan.clamp_propensity)
                est[name], ok[name], sigma2 = a.theta_hat, True, a.sigma2_hat
                continue
            est[name], ok[name] = rep_.estimate, rep_.converged
        except (SparseAipwError, np.linalg.LinAlgError, FloatingPointError):
            est[name], ok[name] = math.nan, False
    return Replicate(est, ok, sigma2, data.n)


def _task(args):
    plan, design, size, rep = args
    return run_replicate(plan, design, size, rep)


def summarize(estimates, converged, theta, sigma2=None, n=None, ci_scale="sqrt_n"):
    """Bias, SE, RB and CR over the converged replicates of one cell."""
    estimates = np.asarray(estimates, dtype=float)
    ok = np.asarray(converged, dtype=bool) & np.isfinite(estimates)
    e = estimates[ok]
    failures = int(estimates.size - e.size)
    if e.size == 0:
        return dict(bias=math.nan, se=math.nan, rb=None, cr=None, converged=0, failures=failures)
    bias = float(np.mean(e) - theta)
    se = float(np.std(e, ddof=1)) if e.size > 1 else math.nan
    rb = cr = None
    if sigma2 is not None:
        s2 = np.asarray(sigma2, dtype=float)[ok]
        var_hat = s2 / n if ci_scale == "sqrt_n" else s2
        rb = float((np.mean(var_hat) - se**2) / se**2) if se > 0 else math.nan
        half = Z95 * np.sqrt(var_hat)
        cr = float(np.mean((e - half <= theta) & (theta <= e + half)))
    return dict(bias=bias, se=se, rb=rb, cr=cr, converged=int(e.size), failures=failures)


def run_experiment(plan: ExperimentPlan) -> MetricsTable:
    tasks = [(plan, d, s, r) for d, s in plan.cells for r in range(plan.replicates)]
    if plan.workers > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=1))
    else:
        results = [_task(t) for t in tasks]

    rows, raw, thetas = [], {}, {}
    for ci, (design, size) in enumerate(plan.cells):
        chunk = results[ci * plan.replicates:(ci + 1) * plan.replicates]
        outcome = DESIGNS[design][0]
        theta = true_theta(outcome, plan.theta_source)
        thetas[outcome] = theta
        n = SIZES[size][0]
        for name in plan.estimators:
            e = [r.estimates[name] for r in chunk]
            c = [r.converged[name] for r in chunk]
            s2 = [r.sigma2 for r in chunk] if name == "PROP" else None
            m = summarize(e, c, theta, s2, n, plan.ci_scale)
            rows.append(CellMetrics(design, size, name, **m))
            raw[(design, size, name)] = {"estimates": np.array(e), "converged": np.array(c),
                                         "sigma2": None if s2 is None else np.array(s2)}
    return MetricsTable(rows, plan.replicates, thetas, raw)


class NormalityDiagnostic(NamedTuple):
    skewness: float
    excess_kurtosis: float
    defined: bool


def normality_diagnostic(estimates, sigma2s, theta: float, n: int) -> NormalityDiagnostic:
    """Sample skewness and excess kurtosis of ``(theta_hat - theta) / sqrt(sigma2 / n)``."""
    estimates = np.asarray(estimates, dtype=float)
    sigma2s = np.asarray(sigma2s, dtype=float)
    if estimates.size < 50:
        raise ValueError("normality diagnostic needs at least 50 replicates")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (estimates - theta) / np.sqrt(sigma2s / n)
    if not np.all(np.isfinite(z)) or np.ptp(z) == 0:
        return NormalityDiagnostic(math.nan, math.nan, False)
    return NormalityDiagnostic(float(stats.skew(z)), float(stats.kurtosis(z)), True)

