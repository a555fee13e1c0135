"""Mean estimators under missing-at-random nonresponse.

``prop_estimate`` is the sparse AIPW pipeline; ``cc_estimate``,
``ps_estimate``, ``di_estimate`` and ``naipw_estimate`` are the baselines it
is compared against.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import IncompleteDataset
from .exceptions import DomainError
from .kernels import DEFAULT_RIDGE, KernelConfig, KrrModel, fit_krr, median_bandwidth
from .propensity import (
    BcgdConfig,
    GroupStructure,
    PropensityModel,
    clamp,
    fit_group_lasso,
    fit_group_lasso_bic,
    fit_logistic_mle,
    predict_propensity,
)
from .selection import ThresholdSearchConfig, fit_sparse_krr

Z95 = 1.96
PROPENSITY_FLOOR = 0.01


@dataclass(frozen=True)
class AipwEstimate:
    theta_hat: float
    sigma2_hat: float
    ci_low: float
    ci_high: float
    pseudo_values: np.ndarray
    response_rate: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.pseudo_values.size

    @property
    def std_error(self) -> float:
        return float(np.sqrt(self.sigma2_hat / self.n))


@dataclass(frozen=True)
class EstimatorReport:
    method: str
    estimate: float
    converged: bool = True
    diagnostics: dict = field(default_factory=dict, compare=False)


def _predictions(f0, x) -> np.ndarray:
    if isinstance(f0, KrrModel):
        return f0.predict_full(x)
    if callable(f0):
        return np.asarray(f0(x), dtype=float)
    f = np.asarray(f0, dtype=float)
    return np.broadcast_to(f, (x.shape[0],)).astype(float) if f.ndim == 0 else f


def aipw_estimate(data: IncompleteDataset, f0, pi_hat, normalize: str = "n") -> AipwEstimate:
    """Augmented IPW mean with plug-in variance and a 95% interval.

    ``f0`` is a fitted :class:`KrrModel`, a callable, or predictions for all
    ``n`` rows.  Pseudo-values are ``f0(x_i) + delta_i / pi_i (y_i - f0(x_i))``;
    ``normalize="weights"`` divides their sum by ``sum(delta / pi)`` instead of
    ``n``.  The variance is the sample variance of the pseudo-values, so the
    interval half-width is ``1.96 * sqrt(sigma2 / n)``.
    """
    n = data.n
    pi = np.asarray(pi_hat, dtype=float).ravel()
    if pi.size != n:
        raise DomainError(f"expected {n} propensities, got {pi.size}")
    if np.any(~np.isfinite(pi) | (pi <= 0) | (pi > 1)):
        raise DomainError("propensities must lie in (0, 1]")
    diagnostics = {}
    low = int(np.sum(pi[data.observed] < PROPENSITY_FLOOR))
    if low:
        diagnostics["below_floor"] = low
        warnings.warn(f"{low} observed units have propensity below {PROPENSITY_FLOOR}",
                      RuntimeWarning, stacklevel=2)
    f = _predictions(f0, data.x)
    d = data.delta
    # delta y / pi + (1 - delta / pi) f: reproduces y exactly where pi = 1
    w = d / pi
    pseudo = w * data.y_filled() + (1.0 - w) * f
    if normalize == "n":
        theta = float(np.mean(pseudo))
    elif normalize == "weights":
        theta = float(np.sum(pseudo) / np.sum(d / pi))
    else:
        raise ValueError(f"unknown normalization {normalize!r}")
    sigma2 = float(np.var(pseudo, ddof=1)) if n > 1 else 0.0
    half = Z95 * np.sqrt(sigma2 / n)
    return AipwEstimate(theta, sigma2, theta - half, theta + half, pseudo,
                        data.response_rate, diagnostics)


def cc_estimate(data: IncompleteDataset) -> EstimatorReport:
    _, y = data.complete_cases()
    return EstimatorReport("CC", float(np.mean(y)), True, {"m": y.size})


def ps_estimate(data: IncompleteDataset, model: PropensityModel | None = None) -> EstimatorReport:
    """Inverse propensity weighting with the full-covariate logistic MLE."""
    if data.n_observed == data.n:
        return EstimatorReport("PS", float(np.mean(data.y)), True, {"degenerate": "all observed"})
    model = model or fit_logistic_mle(data.x, data.delta)
    pi = predict_propensity(model, data.x)
    obs = data.observed
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        est = float(np.sum(data.y[obs] / pi[obs]) / data.n)
    diag = {"reason": model.diagnostics.get("reason"), "iterations": model.iterations}
    return EstimatorReport("PS", est, bool(model.converged and np.isfinite(est)), diag)


def fit_full_krr(x_obs, y_obs, ridge: float = DEFAULT_RIDGE) -> KrrModel:
    """Kernel ridge fit on every covariate, bandwidth by the median rule."""
    return fit_krr(x_obs, y_obs, KernelConfig(median_bandwidth(x_obs), ridge))


def di_estimate(data: IncompleteDataset, f_hat: KrrModel | None = None,
                ridge: float = DEFAULT_RIDGE) -> EstimatorReport:
    """Deterministic kernel-ridge imputation of the missing responses."""
    if data.n_observed == data.n:
        return EstimatorReport("DI", float(np.mean(data.y)))
    if f_hat is None:
        f_hat = fit_full_krr(*data.complete_cases(), ridge=ridge)
    filled = np.where(data.observed, data.y_filled(), f_hat.predict_full(data.x))
    return EstimatorReport("DI", float(np.mean(filled)))


def naipw_estimate(data: IncompleteDataset, f_hat: KrrModel | None = None,
                   pi_model: PropensityModel | None = None,
                   ridge: float = DEFAULT_RIDGE) -> EstimatorReport:
    """AIPW with the non-sparse imputation and the full-covariate MLE."""
    if data.n_observed == data.n:
        return EstimatorReport("NAIPW", float(np.mean(data.y)))
    if f_hat is None:
        f_hat = fit_full_krr(*data.complete_cases(), ridge=ridge)
    pi_model = pi_model or fit_logistic_mle(data.x, data.delta)
    pi = predict_propensity(pi_model, data.x)
    f = f_hat.predict_full(data.x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        pseudo = f + np.where(data.observed, (data.y_filled() - f) / pi, 0.0)
    est = float(np.mean(pseudo))
    diag = {"reason": pi_model.diagnostics.get("reason")}
    return EstimatorReport("NAIPW", est, bool(pi_model.converged and np.isfinite(est)), diag)


def fit_propensity(x, delta, lam2="auto", structure: GroupStructure | None = None,
                   config: BcgdConfig | None = None) -> PropensityModel:
    """Group-lasso propensity with a BIC-chosen penalty unless ``lam2`` is given."""
    if isinstance(lam2, str):
        if lam2 != "auto":
            raise ValueError(f"lam2 must be 'auto' or a number, got {lam2!r}")
        return fit_group_lasso_bic(x, delta, structure, config)
    return fit_group_lasso(x, delta, float(lam2), structure, config)


def prop_estimate(data: IncompleteDataset, search: ThresholdSearchConfig | None = None,
                  lasso: BcgdConfig | None = None, ridge: float = DEFAULT_RIDGE,
                  lam2="auto", structure: GroupStructure | None = None,
                  clamp_propensity: bool = False, normalize: str = "n") -> AipwEstimate:
    """Sparse kernel imputation plus group-lasso propensity, combined by AIPW.

    The outcome model is fitted on the complete cases after gradient-based
    covariate selection; the propensity model uses every row and every
    covariate.  Probabilities are clamped to ``[0.01, 0.99]`` only when
    ``clamp_propensity`` is set.
    """
    search = search or ThresholdSearchConfig()
    x_obs, y_obs = data.complete_cases()
    if data.n_observed == data.n:
        pi = np.ones(data.n)
        pi_model = None
    else:
        pi_model = fit_propensity(data.x, data.delta, lam2, structure, lasso)
        pi = predict_propensity(pi_model, data.x)
        if clamp_propensity:
            pi = clamp(pi, PROPENSITY_FLOOR)
    if x_obs.shape[0] >= 4:
        f0 = fit_sparse_krr(x_obs, y_obs, search, ridge=ridge)
    else:
        f0 = float(np.mean(y_obs))
    est = aipw_estimate(data, f0, pi, normalize=normalize)
    est.diagnostics.update(
        active_set=getattr(f0, "active_set", ()),
        no_signal=getattr(f0, "diagnostics", {}).get("no_signal", False),
        threshold=getattr(f0, "diagnostics", {}).get("threshold"),
        propensity=pi_model,
        propensity_converged=True if pi_model is None else pi_model.converged,
    )
    return est
