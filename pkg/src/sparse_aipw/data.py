from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateInputError, DimensionError
from .kernels import as_covariates


@dataclass(frozen=True)
class IncompleteDataset:
    """Covariates for every unit and responses observed where ``delta == 1``.

    Unobserved entries of ``y`` are stored as NaN and never read.
    """

    x: np.ndarray
    y: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        x = as_covariates(self.x)
        y = np.asarray(self.y, dtype=float).ravel()
        delta = np.asarray(self.delta).ravel().astype(np.int8)
        if not (y.size == delta.size == x.shape[0]):
            raise DimensionError(
                f"inconsistent lengths: x has {x.shape[0]} rows, y {y.size}, delta {delta.size}"
            )
        if not np.isin(delta, (0, 1)).all():
            raise DegenerateInputError("delta must be binary")
        if delta.sum() < 1:
            raise DegenerateInputError("no observed responses")
        y = np.where(delta == 1, y, np.nan)
        if not np.all(np.isfinite(y[delta == 1])):
            raise DegenerateInputError("observed responses must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return self.delta == 1

    @property
    def n_observed(self) -> int:
        return int(self.delta.sum())

    @property
    def response_rate(self) -> float:
        return self.n_observed / self.n

    def complete_cases(self) -> tuple[np.ndarray, np.ndarray]:
        obs = self.observed
        return self.x[obs], self.y[obs]

    def y_filled(self, fill: float = 0.0) -> np.ndarray:
        """Responses with unobserved slots replaced by ``fill``."""
        return np.where(self.observed, self.y, fill)
