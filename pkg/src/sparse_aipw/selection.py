"""Covariate selection by thresholding empirical gradient norms.

The threshold is picked by selection stability: the sample is split in half
repeatedly, each half is fitted on its own, and a threshold is preferred when
both halves select the same covariates (Cohen's kappa near one).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    KernelConfig,
    KrrModel,
    as_covariates,
    constant_model,
    fit_krr,
    gradient_norms,
    kernel_matrix,
    median_bandwidth,
)
from .exceptions import DegenerateInputError, DimensionError


@dataclass(frozen=True)
class ThresholdSearchConfig:
    grid_size: int = 50
    n_splits: int = 20
    stability_target: float = 1.0
    rng_seed: int = 0
    tie_break: str = "smallest"

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")
        if self.n_splits < 2:
            raise ValueError("n_splits must be at least 2")
        if not 0 < self.stability_target <= 1:
            raise ValueError("stability_target must lie in (0, 1]")
        if self.tie_break not in ("smallest", "largest"):
            raise ValueError("tie_break must be 'smallest' or 'largest'")


@dataclass(frozen=True)
class ActiveSet:
    indices: tuple[int, ...]
    threshold: float


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    grid: np.ndarray
    agreement: np.ndarray
    norms: np.ndarray
    no_signal: bool = False
    extra: dict = field(default_factory=dict)


def select_active(norms, v: float) -> ActiveSet:
    norms = np.asarray(norms, dtype=float)
    return ActiveSet(tuple(int(i) for i in np.flatnonzero(norms > v)), float(v))


def kappa_agreement(a: np.ndarray, b: np.ndarray) -> float:
    """Cohen's kappa between two boolean selection masks.

    Two empty or two full selections carry no information and score -1.
    """
    p = a.size
    na, nb = int(a.sum()), int(b.sum())
    both = int(np.sum(a & b))
    neither = p - na - nb + both
    observed = (both + neither) / p
    chance = (na * nb + (p - na) * (p - nb)) / p**2
    if chance >= 1.0:
        return -1.0
    return (observed - chance) / (1.0 - chance)


def threshold_grid(norms: np.ndarray, size: int) -> np.ndarray:
    pos = norms[norms > 0]
    lo, hi = pos.min(), pos.max()
    if lo == hi:
        return np.array([lo])
    return np.geomspace(lo, hi, size)


def split_indices(m: int, seed: int, split: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(split)])))
    perm = rng.permutation(m)
    half = m // 2
    return np.sort(perm[:half]), np.sort(perm[half:2 * half])


def _half_norms(x, y, kfull, idx, ridge, bandwidth):
    k = kfull[np.ix_(idx, idx)]
    model = fit_krr(x[idx], y[idx], KernelConfig(bandwidth, ridge), kmat=k)
    return gradient_norms(model, kmat=k)


def stability_threshold(x_obs, y_obs, config: KernelConfig, search: ThresholdSearchConfig,
                        norms=None, kmat=None) -> ThresholdResult:
    """Pick the gradient-norm threshold that maximizes split-half agreement.

    Each split draws its own Philox stream from ``(rng_seed, split)``.  Among
    grid values whose mean kappa reaches ``stability_target * max``, the
    smallest (or largest, per ``search.tie_break``) wins.
    """
    x_obs = as_covariates(x_obs, "x_obs")
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    m = x_obs.shape[0]
    if m < 4:
        raise DegenerateInputError("stability search needs at least 4 complete cases")
    if kmat is None:
        kmat = kernel_matrix(x_obs, config.bandwidth)
    if norms is None:
        norms = gradient_norms(fit_krr(x_obs, y_obs, config, kmat=kmat), kmat=kmat)
    if not np.any(norms > 0):
        return ThresholdResult(0.0, np.zeros(0), np.zeros(0), norms, no_signal=True)

    grid = threshold_grid(norms, search.grid_size)
    agreement = np.zeros(grid.size)
    for b in range(search.n_splits):
        i1, i2 = split_indices(m, search.rng_seed, b)
        n1 = _half_norms(x_obs, y_obs, kmat, i1, config.ridge, config.bandwidth)
        n2 = _half_norms(x_obs, y_obs, kmat, i2, config.ridge, config.bandwidth)
        for j, v in enumerate(grid):
            agreement[j] += kappa_agreement(n1 > v, n2 > v)
    agreement /= search.n_splits

    best = agreement.max()
    if search.stability_target < 1.0:
        ok = agreement >= search.stability_target * best if best > 0 else agreement >= best - 1e-12
    else:
        ok = agreement >= best - 1e-12
    pick = np.flatnonzero(ok)
    j = pick[0] if search.tie_break == "smallest" else pick[-1]
    return ThresholdResult(float(grid[j]), grid, agreement, norms)


def fit_sparse_krr(x_obs, y_obs, search: ThresholdSearchConfig, ridge: float = 1e-3,
                   config: KernelConfig | None = None, force_active=None) -> KrrModel:
    """Select covariates by stable gradient thresholding, then refit on them.

    ``config`` fixes the bandwidth of the screening fit; by default it is the
    median pairwise distance of ``x_obs``.  The refit always recomputes the
    bandwidth on the selected columns.  An empty selection yields the
    constant model at the mean of ``y_obs``.
    """
    x_obs = as_covariates(x_obs, "x_obs")
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    if y_obs.size != x_obs.shape[0]:
        raise DimensionError("x_obs and y_obs lengths differ")
    if config is None:
        config = KernelConfig(median_bandwidth(x_obs), ridge)
    diagnostics = {"screen_bandwidth": config.bandwidth}

    if force_active is None:
        kmat = kernel_matrix(x_obs, config.bandwidth)
        norms = gradient_norms(fit_krr(x_obs, y_obs, config, kmat=kmat), kmat=kmat)
        res = stability_threshold(x_obs, y_obs, config, search, norms=norms, kmat=kmat)
        active = select_active(norms, res.threshold).indices if not res.no_signal else ()
        diagnostics.update(norms=norms, threshold=res.threshold, no_signal=res.no_signal,
                           agreement=float(res.agreement.max()) if res.agreement.size else None)
    else:
        active = tuple(sorted(int(i) for i in force_active))

    if not active:
        model = constant_model(float(np.mean(y_obs)), x_obs, config)
    else:
        xa = x_obs[:, list(active)]
        try:
            bw = median_bandwidth(xa)
        except DegenerateInputError:
            bw = config.bandwidth
        model = fit_krr(xa, y_obs, KernelConfig(bw, config.ridge), active_set=active)
    model.diagnostics.update(diagnostics)
    return model
