"""Logistic response-probability models.

``fit_group_lasso`` minimizes ``-loglik(beta) + lam * sum_g sqrt(df_g) ||beta_g||``
by block coordinate gradient descent: each group takes a step from a
quadratic model with curvature ``h_g * I`` followed by Armijo backtracking.
The intercept is never penalized.  ``fit_logistic_mle`` is the plain
Newton-Raphson maximum likelihood fit used by the non-sparse baselines.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.special import expit, logit

from ._bcgd import nll_change, sweep_compiled, sweep_reference
from .exceptions import ConvergenceError, DegenerateInputError, DimensionError


# fitted probabilities stay strictly inside (0, 1) even for extreme indices
PROB_LO, PROB_HI = 2.0**-56, 1.0 - 2.0**-52


@dataclass(frozen=True)
class GroupStructure:
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        flat = [i for g in self.groups for i in g]
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("groups must partition the covariate columns 0..p-1")
        if any(len(g) == 0 for g in self.groups):
            raise ValueError("empty group")

    @classmethod
    def singletons(cls, p: int) -> "GroupStructure":
        return cls(tuple((j,) for j in range(p)))

    @classmethod
    def from_labels(cls, labels) -> "GroupStructure":
        """One group per distinct label, in order of first appearance."""
        order = {}
        for j, lab in enumerate(labels):
            order.setdefault(lab, []).append(j)
        return cls(tuple(tuple(v) for v in order.values()))

    @property
    def p(self) -> int:
        return sum(len(g) for g in self.groups)

    @cached_property
    def df(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups], dtype=float)

    @cached_property
    def pointers(self) -> tuple[np.ndarray, np.ndarray]:
        """``(ptr, cols)``: columns of group ``k`` are ``cols[ptr[k]:ptr[k + 1]]``."""
        ptr = np.zeros(len(self.groups) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(g) for g in self.groups])
        cols = np.array([i for g in self.groups for i in g], dtype=np.int64)
        return ptr, cols

    @cached_property
    def group_index(self) -> np.ndarray:
        """Group number of every column."""
        out = np.empty(self.p, dtype=np.intp)
        for k, g in enumerate(self.groups):
            out[list(g)] = k
        return out


@dataclass(frozen=True)
class BcgdConfig:
    alpha0: float = 1.0
    backtrack: float = 0.5
    armijo: float = 0.1
    h_floor: float = 1e-3
    h_cap: float = 1e8
    max_iter: int = 500
    kkt_tol: float = 1e-6
    max_backtracks: int = 60
    standardize: bool = True
    compiled: bool = True

    def __post_init__(self):
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")
        if not 0 < self.backtrack < 1 or not 0 < self.armijo < 1:
            raise ValueError("backtrack and armijo constants must lie in (0, 1)")
        if self.h_floor <= 0 or self.kkt_tol <= 0:
            raise ValueError("h_floor and kkt_tol must be positive")


@dataclass(frozen=True)
class PropensityModel:
    beta0: float
    beta1: np.ndarray
    penalty: float
    structure: GroupStructure | None
    converged: bool
    iterations: int
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([[self.beta0], self.beta1])

    def nonzero_groups(self) -> list[int]:
        if self.structure is None:
            return [j for j in range(self.beta1.size) if self.beta1[j] != 0]
        return [g for g, cols in enumerate(self.structure.groups)
                if np.any(self.beta1[list(cols)] != 0)]

    def predict(self, x) -> np.ndarray:
        return predict_propensity(self, x)


def _split(beta):
    beta = np.asarray(beta, dtype=float).ravel()
    return beta[0], beta[1:]


def _check(x, delta, p=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    delta = np.asarray(delta, dtype=float).ravel()
    if x.shape[0] != delta.size:
        raise DimensionError(f"x has {x.shape[0]} rows but delta has {delta.size}")
    if p is not None and x.shape[1] != p:
        raise DimensionError(f"expected {p} covariates, got {x.shape[1]}")
    return x, delta


def _nll_from_index(eta, delta) -> float:
    # log(1 + e^eta) - delta * eta, summed without forming probabilities
    return float(np.sum(np.logaddexp(0.0, eta) - delta * eta))


def log_likelihood(beta, x, delta) -> float:
    b0, b1 = _split(beta)
    x, delta = _check(x, delta, b1.size)
    return -_nll_from_index(b0 + x @ b1, delta)


def group_penalty(beta1, structure: GroupStructure) -> float:
    beta1 = np.asarray(beta1, dtype=float)
    return float(np.sqrt(structure.df) @ group_norms(beta1, structure))


def penalized_objective(beta, x, delta, lam: float, structure: GroupStructure) -> float:
    _, b1 = _split(beta)
    return -log_likelihood(beta, x, delta) + lam * group_penalty(b1, structure)


def neg_loglik_gradient(beta, x, delta) -> np.ndarray:
    """Gradient of ``-loglik`` with respect to ``(beta0, beta1)``."""
    b0, b1 = _split(beta)
    x, delta = _check(x, delta, b1.size)
    r = expit(b0 + x @ b1) - delta
    return np.concatenate([[r.sum()], x.T @ r])


def bcgd_direction(beta_g, grad_g, h_g: float, lam: float, df_g: int) -> np.ndarray:
    """Minimizer ``d`` of ``grad_g.d + h_g/2 |d|^2 + lam sqrt(df_g) |beta_g + d|``.

    ``grad_g`` is the gradient of the negative log-likelihood block.
    """
    beta_g = np.atleast_1d(np.asarray(beta_g, dtype=float))
    grad_g = np.atleast_1d(np.asarray(grad_g, dtype=float))
    if h_g <= 0:
        raise ValueError("curvature h_g must be positive")
    w = lam * np.sqrt(df_g)
    u = grad_g - h_g * beta_g
    nu = np.linalg.norm(u)
    if nu <= w:
        return -beta_g.copy()
    return -(grad_g - w * u / nu) / h_g


def descent_measure(beta, d, grad, lam: float, structure: GroupStructure) -> float:
    """``Delta = d . grad(-l) + lam * sum_g sqrt(df_g) (|beta_g + d_g| - |beta_g|)``."""
    beta = np.asarray(beta, dtype=float)
    d = np.asarray(d, dtype=float)
    delta = float(np.dot(d, grad))
    b1, d1 = beta[1:], d[1:]
    for g in structure.groups:
        cols = list(g)
        if np.any(d1[cols] != 0):
            delta += lam * np.sqrt(len(g)) * (
                np.linalg.norm(b1[cols] + d1[cols]) - np.linalg.norm(b1[cols]))
    return delta


def _backtrack(phi, delta_measure, config: BcgdConfig):
    """Largest ``alpha0 * backtrack**l`` with ``phi(alpha) <= alpha * armijo * Delta``."""
    alpha = config.alpha0
    for _ in range(config.max_backtracks + 1):
        if phi(alpha) <= alpha * config.armijo * delta_measure:
            return alpha
        alpha *= config.backtrack
    return None


def armijo_step(beta, d, lam: float, structure: GroupStructure, config: BcgdConfig, x, delta) -> float:
    beta = np.asarray(beta, dtype=float)
    d = np.asarray(d, dtype=float)
    if not np.any(d != 0):
        raise ValueError("direction must be nonzero")
    x, delta = _check(x, delta, beta.size - 1)
    grad = neg_loglik_gradient(beta, x, delta)
    dm = descent_measure(beta, d, grad, lam, structure)
    if not dm < 0:
        raise ValueError(f"not a descent direction (Delta = {dm:.3e})")
    base = penalized_objective(beta, x, delta, lam, structure)
    step = _backtrack(
        lambda a: penalized_objective(beta + a * d, x, delta, lam, structure) - base, dm, config)
    if step is None:
        raise ConvergenceError("Armijo search stalled",
                               {"Delta": dm, "backtracks": config.max_backtracks})
    return step


def _standardize(x, enabled):
    if not enabled:
        return np.asfortranarray(x), np.zeros(x.shape[1]), np.ones(x.shape[1])
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    # column-major so that z.T rows are contiguous for the group sweep
    return np.asfortranarray((x - mu) / sd), mu, sd


def group_norms(v, structure: GroupStructure) -> np.ndarray:
    """Euclidean norm of ``v`` restricted to each group."""
    return np.sqrt(np.bincount(structure.group_index, weights=np.square(v),
                               minlength=len(structure.groups)))


def kkt_violations(beta1, grad0, grad1, lam, structure):
    """Per-group KKT residuals for the penalized problem, intercept last.

    Nonzero groups report ``|grad_g + w_g beta_g / |beta_g||``; zero groups
    report how far ``|grad_g|`` exceeds ``w_g = lam sqrt(df_g)``.
    """
    w = lam * np.sqrt(structure.df)
    bn = group_norms(beta1, structure)
    active = bn > 0
    scale = np.where(active, w / np.where(active, bn, 1.0), 0.0)
    sub = group_norms(grad1 + scale[structure.group_index] * beta1, structure)
    zero = np.maximum(group_norms(grad1, structure) - w, 0.0)
    return np.append(np.where(active, sub, zero), abs(grad0))


def _kkt_scale(grad0, grad1):
    return 1.0 + max(abs(grad0), np.max(np.abs(grad1)) if grad1.size else 0.0)


def _null_fit(delta):
    rate = delta.mean()
    return float(logit(rate))


def lambda_max(x, delta, structure: GroupStructure | None = None, standardize: bool = True) -> float:
    """Smallest penalty at which every group is zero (intercept-only fit)."""
    x, delta = _check(x, delta)
    structure = structure or GroupStructure.singletons(x.shape[1])
    z, _, _ = _standardize(x, standardize)
    r = expit(_null_fit(delta)) - delta
    grad = z.T @ r
    return float(np.max(group_norms(grad, structure) / np.sqrt(structure.df)))


def fit_group_lasso(x, delta, lam: float, structure: GroupStructure | None = None,
                    config: BcgdConfig | None = None, init=None, _std=None) -> PropensityModel:
    """Group-lasso logistic regression by block coordinate gradient descent.

    Each sweep updates every group that is nonzero or violates its zero-group
    optimality condition at the start of the sweep, then the intercept.
    The sweep loop stops once the largest KKT residual over all groups is
    below ``kkt_tol``.  ``init`` is a warm start ``(beta0, beta1)`` on the
    standardized scale (as stored in ``diagnostics['std_coef']``).
    """
    config = config or BcgdConfig()
    x, delta = _check(x, delta)
    n, p = x.shape
    if not (0 < delta.sum() < n):
        raise DegenerateInputError("delta must contain both responders and nonresponders")
    if lam < 0:
        raise ValueError("penalty must be nonnegative")
    structure = structure or GroupStructure.singletons(p)
    if structure.p != p:
        raise DimensionError(f"group structure covers {structure.p} columns, x has {p}")

    z, mu, sd = _standardize(x, config.standardize) if _std is None else _std
    zt = np.ascontiguousarray(z.T)
    ptr, cols = structure.pointers
    sweep_groups = sweep_compiled if config.compiled else sweep_reference
    weights = lam * np.sqrt(structure.df)
    if init is None:
        b0, b1 = _null_fit(delta), np.zeros(p)
    else:
        b0, b1 = float(init[0]), np.array(init[1], dtype=float)
    eta = b0 + z @ b1  # updated in place by the sweep
    nll = _nll_from_index(eta, delta)
    pen = float(weights @ group_norms(b1, structure))
    history = [nll + pen]
    converged = False
    viol = np.inf
    sweep = 0

    def intercept_step():
        # unpenalized scalar Newton step with Armijo backtracking; a failed
        # search only happens at roundoff level, so the intercept is left alone
        nonlocal b0, eta, nll
        prob = expit(eta)
        g0 = float(np.sum(prob - delta))
        h0 = min(max(float(np.sum(prob * (1 - prob))), config.h_floor), config.h_cap)
        d0 = -g0 / h0
        if d0 != 0:
            step = _backtrack(lambda a: nll_change(eta, a * d0, delta), d0 * g0, config)
            if step is not None:
                b0 += step * d0
                eta += step * d0
                nll = _nll_from_index(eta, delta)

    intercept_step()
    grad1 = zt @ (expit(eta) - delta)
    for sweep in range(1, config.max_iter + 1):
        working = np.flatnonzero((group_norms(b1, structure) > 0)
                                 | (group_norms(grad1, structure) > weights))
        nll, stalled = sweep_groups(zt, delta, eta, b1, ptr, cols, working, weights,
                                    config.alpha0, config.backtrack, config.armijo,
                                    config.h_floor, config.h_cap, config.max_backtracks)
        nll = float(nll)
        intercept_step()

        bn = group_norms(b1, structure)
        history.append(nll + float(weights @ bn))
        r = expit(eta) - delta
        grad0, grad1 = float(r.sum()), zt @ r
        v = kkt_violations(b1, grad0, grad1, lam, structure)
        active = np.append(bn > 0, True)
        viol = max(np.max(v[active], initial=0.0) / _kkt_scale(grad0, grad1),
                   np.max(v[~active], initial=0.0))
        if viol <= config.kkt_tol:
            converged = True
            break
        if stalled and history[-1] >= history[-2]:
            break

    beta1 = b1 / sd
    beta0 = b0 - float(beta1 @ mu)
    diag = {"objective": np.array(history), "kkt": viol, "std_coef": (b0, b1.copy()),
            "loglik": -nll}
    return PropensityModel(beta0, beta1, lam, structure, converged, sweep, diag)


def fit_group_lasso_bic(x, delta, structure: GroupStructure | None = None,
                        config: BcgdConfig | None = None, n_lambda: int = 30,
                        ratio: float = 1e-3) -> PropensityModel:
    """Pick the penalty on a log grid below ``lambda_max`` by BIC.

    BIC is ``-2 loglik + log(n) * (number of nonzero slopes)``.  The path is
    walked from the largest penalty with warm starts and stops once
    ``log(n) * nonzero`` alone exceeds the best BIC found, since no later
    model on the path can win from there.
    """
    config = config or BcgdConfig()
    x, delta = _check(x, delta)
    n = x.shape[0]
    structure = structure or GroupStructure.singletons(x.shape[1])
    std = _standardize(x, config.standardize)
    lmax = lambda_max(std[0], delta, structure, standardize=False)
    grid = lmax * np.geomspace(1.0, ratio, n_lambda)
    best, best_bic, init = None, np.inf, None
    path = []
    for lam in grid:
        model = fit_group_lasso(x, delta, lam, structure, config, init=init, _std=std)
        init = model.diagnostics["std_coef"]
        k = int(np.count_nonzero(model.beta1))
        bic = -2.0 * model.diagnostics["loglik"] + np.log(n) * k
        path.append((float(lam), bic, k, model.converged))
        if bic < best_bic:
            best, best_bic = model, bic
        if np.log(n) * k > best_bic:
            break
    best.diagnostics.update(bic=best_bic, lambda_path=path, lambda_max=lmax)
    return best


def fit_logistic_mle(x, delta, max_iter: int = 100, tol: float = 1e-8) -> PropensityModel:
    """Unpenalized logistic MLE by Newton-Raphson with step halving.

    Never raises on failure: ``converged`` is false when there are at least
    as many coefficients as rows, when the iterations run out, or when the
    fitted probabilities collapse onto 0 or 1 (separated data).
    """
    x, delta = _check(x, delta)
    n, p = x.shape
    if not (0 < delta.sum() < n):
        raise DegenerateInputError("delta must contain both responders and nonresponders")
    design = np.hstack([np.ones((n, 1)), x])
    beta = np.zeros(p + 1)
    beta[0] = _null_fit(delta)
    if p + 1 > n:
        return PropensityModel(beta[0], beta[1:], 0.0, None, False, 0, {"reason": "p >= n"})

    nll = _nll_from_index(design @ beta, delta)
    reason = "max_iter"
    jittered = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        prob = expit(design @ beta)
        score = design.T @ (delta - prob)
        if np.max(np.abs(score)) <= tol * n:
            converged = True
            reason = "score"
            break
        w = prob * (1 - prob)
        hess = (design * w[:, None]).T @ design
        try:
            step = sla.cho_solve(sla.cho_factor(hess, check_finite=False), score, check_finite=False)
        except np.linalg.LinAlgError:
            if jittered:
                reason = "singular hessian"
                break
            jittered = True
            hess += 1e-8 * np.trace(hess) / (p + 1) * np.eye(p + 1)
            try:
                step = sla.cho_solve(sla.cho_factor(hess, check_finite=False), score, check_finite=False)
            except np.linalg.LinAlgError:
                reason = "singular hessian"
                break
        t = 1.0
        while t > 1e-10:
            cand = beta + t * step
            new = _nll_from_index(design @ cand, delta)
            if new <= nll + 1e-12 * abs(nll):
                break
            t *= 0.5
        else:
            reason = "line search"
            break
        beta, nll = cand, new

    prob = expit(design @ beta)
    if converged and np.min(np.minimum(prob, 1 - prob)) < 1e-8:
        converged, reason = False, "separation"
    if not np.all(np.isfinite(beta)):
        converged, reason = False, "non-finite"
        beta = np.where(np.isfinite(beta), beta, 0.0)
    return PropensityModel(float(beta[0]), beta[1:], 0.0, None, converged, it,
                           {"reason": reason, "loglik": -nll})


def predict_propensity(model: PropensityModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if model.beta1.size == 1 else x[None, :]
    if x.shape[1] != model.beta1.size:
        raise DimensionError(f"model has {model.beta1.size} slopes, x has {x.shape[1]} columns")
    return np.clip(expit(model.beta0 + x @ model.beta1), PROB_LO, PROB_HI)


def clamp(prob, eps: float = 0.01) -> np.ndarray:
    prob = np.asarray(prob, dtype=float)
    if np.any((prob < eps) | (prob > 1 - eps)):
        warnings.warn(f"propensities clamped to [{eps}, {1 - eps}]", RuntimeWarning, stacklevel=2)
    return np.clip(prob, eps, 1 - eps)
