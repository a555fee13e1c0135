"""Gaussian kernel ridge regression and its gradient functions.

The fitted function is ``f(x) = sum_i alpha_i K(x_i, x)`` with
``alpha = (K + lam * I)^{-1} y``.  Partial derivatives of ``f`` are
available in closed form for the Gaussian kernel, which is what the
covariate selection step consumes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import pdist

from .exceptions import DegenerateInputError, DimensionError, NumericalError

DEFAULT_RIDGE = 1e-3


@dataclass(frozen=True)
class KernelConfig:
    bandwidth: float
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not (np.isfinite(self.ridge) and self.ridge > 0):
            raise ValueError(f"ridge must be positive, got {self.ridge}")


@dataclass(frozen=True)
class KrrModel:
    """Fitted kernel ridge regression.

    ``train_x`` holds only the active columns; ``predict`` and friends expect
    inputs restricted the same way (use :meth:`restrict` on full matrices).
    An empty ``active_set`` with ``intercept`` set is the constant model.
    """

    train_x: np.ndarray
    alpha: np.ndarray
    config: KernelConfig
    active_set: tuple[int, ...]
    intercept: float | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def is_constant(self) -> bool:
        return self.intercept is not None

    def restrict(self, x: np.ndarray) -> np.ndarray:
        """Select the model's active columns from a full covariate matrix."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x[:, list(self.active_set)]

    def predict_full(self, x: np.ndarray) -> np.ndarray:
        """Predict from a matrix that still carries every original column."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_constant:
            return np.full(x.shape[0], self.intercept)
        return predict(self, self.restrict(x))


def as_covariates(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DegenerateInputError(f"{name} contains NaN or Inf")
    return x


def median_bandwidth(x) -> float:
    """Lower median of all pairwise Euclidean distances between rows."""
    x = as_covariates(x)
    if x.shape[0] < 2:
        raise DegenerateInputError("median bandwidth needs at least two rows")
    d = pdist(x)
    k = (d.size - 1) // 2
    med = float(np.partition(d, k)[k])
    if med <= 0.0:
        raise DegenerateInputError("median pairwise distance is zero; bandwidth is singular")
    return med


def gaussian_kernel(x, u, sigma: float) -> float:
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if x.shape != u.shape:
        raise DimensionError(f"length mismatch: {x.size} vs {u.size}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    diff = x - u
    return float(np.exp(-np.dot(diff, diff) / (2.0 * sigma**2)))


def squared_distances(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Pairwise squared distances via the Gram expansion, clipped at zero."""
    sym = b is None
    if sym:
        b = a
    aa = np.einsum("ij,ij->i", a, a)
    bb = aa if sym else np.einsum("ij,ij->i", b, b)
    d2 = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    if sym:
        d2 = 0.5 * (d2 + d2.T)
        np.fill_diagonal(d2, 0.0)
    return d2


def kernel_matrix(x, sigma: float, u=None) -> np.ndarray:
    """Gaussian kernel matrix ``K[i, j] = K(x_i, u_j)``; ``u`` defaults to ``x``.

    The square case is exactly symmetric with unit diagonal.
    """
    x = as_covariates(x)
    if u is not None:
        u = as_covariates(u, "u")
        if u.shape[1] != x.shape[1]:
            raise DimensionError(f"column mismatch: {x.shape[1]} vs {u.shape[1]}")
    return np.exp(squared_distances(x, u) / (-2.0 * sigma**2))


def solve_krr(k: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    """Solve ``(K + ridge * I) alpha = y`` for a precomputed kernel matrix."""
    a = k + ridge * np.eye(k.shape[0])
    try:
        c = sla.cho_factor(a, lower=True, check_finite=False)
        alpha = sla.cho_solve(c, y, check_finite=False)
    except np.linalg.LinAlgError:
        # roundoff can break the leading-minor test on near-duplicate rows
        try:
            alpha = sla.solve(a, y, assume_a="sym", check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(
                f"kernel system is not solvable (cond ~ {np.linalg.cond(a):.3e})"
            ) from exc
    if not np.all(np.isfinite(alpha)):
        raise NumericalError(f"non-finite coefficients (cond ~ {np.linalg.cond(a):.3e})")
    return alpha


def fit_krr(x_obs, y_obs, config: KernelConfig, active_set=None, kmat=None) -> KrrModel:
    """Fit kernel ridge regression on the observed rows.

    ``active_set`` only labels which original columns ``x_obs`` represents;
    pass the already restricted matrix.  ``kmat`` lets callers reuse a kernel
    matrix they already hold for the same rows and bandwidth.
    """
    x_obs = as_covariates(x_obs, "x_obs")
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    if y_obs.size != x_obs.shape[0]:
        raise DimensionError(f"{x_obs.shape[0]} rows but {y_obs.size} responses")
    k = kernel_matrix(x_obs, config.bandwidth) if kmat is None else kmat
    alpha = solve_krr(k, y_obs, config.ridge)
    if active_set is None:
        active_set = tuple(range(x_obs.shape[1]))
    return KrrModel(x_obs, alpha, config, tuple(int(i) for i in active_set))


def constant_model(value: float, x_obs, config: KernelConfig) -> KrrModel:
    x_obs = as_covariates(x_obs)
    return KrrModel(x_obs[:, :0], np.zeros(x_obs.shape[0]), config, (), intercept=float(value))


def _check_columns(model: KrrModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.train_x.shape[1]:
        raise DimensionError(
            f"model has {model.train_x.shape[1]} columns, input has {x.shape[1]}"
        )
    return x


def predict(model: KrrModel, x_new) -> np.ndarray:
    if model.is_constant:
        return np.full(np.atleast_2d(x_new).shape[0], model.intercept)
    x_new = _check_columns(model, x_new)
    return kernel_matrix(x_new, model.config.bandwidth, model.train_x) @ model.alpha


def gradient_matrix(model: KrrModel, x_new, kmat=None) -> np.ndarray:
    """Partial derivatives of the fitted function at each row of ``x_new``.

    Entry ``[r, l]`` is ``sum_i alpha_i K(x_i, z_r) (x_il - z_rl) / sigma^2``.
    """
    x_new = _check_columns(model, x_new)
    if model.is_constant:
        return np.zeros_like(x_new)
    if kmat is None:
        kmat = kernel_matrix(x_new, model.config.bandwidth, model.train_x)
    w = kmat * model.alpha[None, :]
    g = w @ model.train_x - w.sum(axis=1)[:, None] * x_new
    return g / model.config.bandwidth**2


def gradient_eval(model: KrrModel, x_new) -> np.ndarray:
    x_new = np.asarray(x_new, dtype=float).ravel()
    return gradient_matrix(model, x_new[None, :])[0]


def gradient_norms(model: KrrModel, x_obs=None, kmat=None) -> np.ndarray:
    """Empirical squared norms ``mean_i g_l(x_i)^2`` over the fitting rows."""
    x_obs = model.train_x if x_obs is None else x_obs
    g = gradient_matrix(model, x_obs, kmat=kmat)
    return np.mean(g * g, axis=0)
