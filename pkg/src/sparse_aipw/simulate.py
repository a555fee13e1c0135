"""Seeded generators for the simulation designs.

Covariate indices follow Python: the first covariate is column 0, so the
outcome ``5 x1 + 6 x2 + 4 x3 + 4 x4`` reads ``x[:, 0:4]`` here.

Every draw comes from a Philox stream keyed by ``(seed, purpose)``, so the
covariates, outcome noise and response indicators of one replicate are
independent streams that never depend on execution order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import expit

from .data import IncompleteDataset

COVARIATES, NOISE, RESPONSE, MASK = range(4)

DESIGNS = {
    "C1": ("M1", "R1"),
    "C2": ("M2", "R1"),
    "C3": ("M1", "R2"),
    "C4": ("M2", "R2"),
}

SIZES = {
    "I": (800, 400),
    "II": (1000, 400),
    "III": (800, 2000),
    "IV": (1000, 2000),
}

MIN_P = {"M1": 4, "M2": 5, "R1": 3, "R2": 4}


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.SeedSequence([int(s) for s in seed])
    return np.random.SeedSequence(int(seed))


def rng_stream(seed, purpose: int = 0) -> np.random.Generator:
    """Independent counter-based generator for ``(seed, purpose)``."""
    ss = _seed_sequence(seed)
    child = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (purpose,))
    return np.random.Generator(np.random.Philox(child))


def gen_covariates(n: int, p: int, seed) -> np.ndarray:
    return rng_stream(seed, COVARIATES).uniform(-0.5, 0.5, size=(n, p))


def _noise(n, seed, noise):
    if not noise:
        return np.zeros(n)
    return rng_stream(seed, NOISE).standard_normal(n)


def _require(x, model):
    if x.shape[1] < MIN_P[model]:
        raise ValueError(f"{model} needs at least {MIN_P[model]} covariates, got {x.shape[1]}")


def mean_m1(x: np.ndarray) -> np.ndarray:
    _require(x, "M1")
    return 5 * x[:, 0] + 6 * x[:, 1] + 4 * x[:, 2] + 4 * x[:, 3]


def h_m2(x4: np.ndarray) -> np.ndarray:
    s, c = np.sin(np.pi * x4), np.cos(np.pi * x4)
    return 0.1 * s + 0.2 * c + 0.3 * s**2 + 0.4 * c**3 + 0.5 * s**3


def mean_m2(x: np.ndarray) -> np.ndarray:
    _require(x, "M2")
    s5 = np.sin(np.pi * x[:, 4])
    return (
        6 * x[:, 0]
        + 4 * (2 * x[:, 1] + 1) * (2 * x[:, 2] - 1)
        + 6 * h_m2(x[:, 3])
        + 5 * s5 / (2 - s5)
    )


def gen_outcome_m1(x, seed, noise: bool = True) -> np.ndarray:
    x = np.atleast_2d(x)
    return mean_m1(x) + _noise(x.shape[0], seed, noise)


def gen_outcome_m2(x, seed, noise: bool = True) -> np.ndarray:
    x = np.atleast_2d(x)
    return mean_m2(x) + _noise(x.shape[0], seed, noise)


def prob_r1(x: np.ndarray) -> np.ndarray:
    _require(x, "R1")
    return expit(-0.1 + 2 * x[:, 0] + 2 * x[:, 2])


def prob_r2(x: np.ndarray) -> np.ndarray:
    _require(x, "R2")
    return np.sin(6 * x[:, 1] + 8 * x[:, 3]) / 3 + 0.5


def prob_mask_app(x: np.ndarray) -> np.ndarray:
    if x.shape[1] < 10:
        raise ValueError("the application mask needs at least 10 covariates")
    return expit(1 - 0.6 * x[:, 4] - x[:, 5] + 0.5 * x[:, 9])


def _bernoulli(prob, seed, purpose):
    return (rng_stream(seed, purpose).uniform(size=prob.shape) < prob).astype(np.int8)


def gen_response_r1(x, seed) -> np.ndarray:
    return _bernoulli(prob_r1(np.atleast_2d(x)), seed, RESPONSE)


def gen_response_r2(x, seed) -> np.ndarray:
    return _bernoulli(prob_r2(np.atleast_2d(x)), seed, RESPONSE)


def gen_mask_app(x, seed) -> np.ndarray:
    return _bernoulli(prob_mask_app(np.atleast_2d(x)), seed, MASK)


OUTCOMES = {"M1": (gen_outcome_m1, mean_m1), "M2": (gen_outcome_m2, mean_m2)}
RESPONSES = {"R1": (gen_response_r1, prob_r1), "R2": (gen_response_r2, prob_r2)}


@dataclass(frozen=True)
class SimulationSpec:
    outcome_model: str
    response_model: str
    n: int
    p: int
    seed: int | tuple = 0

    def __post_init__(self):
        if self.outcome_model not in OUTCOMES:
            raise ValueError(f"unknown outcome model {self.outcome_model!r}")
        if self.response_model not in RESPONSES:
            raise ValueError(f"unknown response model {self.response_model!r}")
        need = max(MIN_P[self.outcome_model], MIN_P[self.response_model])
        if self.p < need:
            raise ValueError(f"p={self.p} too small for {self.outcome_model}/{self.response_model}")
        if self.n < 1:
            raise ValueError("n must be positive")

    @classmethod
    def from_labels(cls, design: str, size: str, seed=0) -> "SimulationSpec":
        om, rm = DESIGNS[design]
        n, p = SIZES[size]
        return cls(om, rm, n, p, seed)


@dataclass(frozen=True)
class SimulatedData:
    data: IncompleteDataset
    y_full: np.ndarray
    true_mean: np.ndarray
    true_prob: np.ndarray


def generate(spec: SimulationSpec, noise: bool = True) -> SimulatedData:
    x = gen_covariates(spec.n, spec.p, spec.seed)
    gen_y, f_true = OUTCOMES[spec.outcome_model]
    gen_d, pi_true = RESPONSES[spec.response_model]
    y = gen_y(x, spec.seed, noise=noise)
    delta = gen_d(x, spec.seed)
    return SimulatedData(IncompleteDataset(x, y, delta), y, f_true(x), pi_true(x))


@lru_cache(maxsize=None)
def true_theta(outcome_model: str, source: str = "oracle_sample", seed: int = 20220101,
               size: int = 1_000_000) -> float:
    """Population mean of the outcome.

    ``"analytic"`` integrates the regression function (M1 is exactly 0);
    ``"oracle_sample"`` averages a fresh sample of ``size`` outcomes.
    """
    if source == "analytic":
        if outcome_model == "M1":
            return 0.0
        # x1 term and the interaction factorize; the univariate terms need quadrature
        eh = integrate.quad(h_m2, -0.5, 0.5, epsabs=1e-13, epsrel=1e-12)[0]
        e5 = integrate.quad(lambda t: 5 * np.sin(np.pi * t) / (2 - np.sin(np.pi * t)),
                            -0.5, 0.5, epsabs=1e-13, epsrel=1e-12)[0]
        return -4.0 + 6.0 * eh + e5
    if source == "oracle_sample":
        if outcome_model == "M1":
            return 0.0
        x = gen_covariates(size, MIN_P[outcome_model], (seed, 1))
        return float(np.mean(OUTCOMES[outcome_model][0](x, (seed, 2))))
    raise ValueError(f"unknown theta source {source!r}")


def supermarket_standin(seed, n: int = 464, p: int = 6398,
                        loadings=((4, 1.0), (5, 1.0), (9, 0.5)),
                        noise_sd: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Studentized synthetic table shaped like daily supermarket sales.

    Sales volumes are log-normal with a shared day effect; the response
    (customer count) loads on the columns that also drive the application
    mask, so complete-case means are biased under that mask.
    """
    rng = rng_stream(seed, COVARIATES)
    day = rng.standard_normal((n, 1))
    x = np.exp(0.3 * day + 0.5 * rng.standard_normal((n, p)))
    x = (x - x.mean(axis=0)) / x.std(axis=0, ddof=1)
    cols, coef = zip(*loadings)
    y = x[:, list(cols)] @ np.array(coef) + 0.5 * day[:, 0]
    y = y + noise_sd * rng_stream(seed, NOISE).standard_normal(n)
    y = (y - y.mean()) / y.std(ddof=1)
    return x, y
