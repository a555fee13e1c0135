import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_aipw.data import IncompleteDataset
from sparse_aipw.estimators import (
    aipw_estimate,
    cc_estimate,
    di_estimate,
    fit_full_krr,
    naipw_estimate,
    prop_estimate,
    ps_estimate,
)
from sparse_aipw.exceptions import DegenerateInputError, DimensionError, DomainError
from sparse_aipw.propensity import PropensityModel, fit_logistic_mle
from sparse_aipw.selection import ThresholdSearchConfig
from sparse_aipw.simulate import SimulationSpec, generate, mean_m1, prob_r1

FAST = ThresholdSearchConfig(grid_size=20, n_splits=4, rng_seed=0)


def full_data(n=25, p=3, seed=0):
    rng = np.random.default_rng(seed)
    return IncompleteDataset(rng.standard_normal((n, p)), rng.standard_normal(n), np.ones(n))


def test_dataset_validation():
    x = np.zeros((3, 2))
    with pytest.raises(DimensionError):
        IncompleteDataset(x, [1.0, 2.0], [1, 1, 1])
    with pytest.raises(DegenerateInputError):
        IncompleteDataset(x, [1.0, 2.0, 3.0], [0, 0, 0])
    with pytest.raises(DegenerateInputError):
        IncompleteDataset(x, [1.0, 2.0, 3.0], [1, 2, 0])
    d = IncompleteDataset(x, [1.0, 99.0, 3.0], [1, 0, 1])
    assert np.isnan(d.y[1]) and d.n_observed == 2 and d.response_rate == pytest.approx(2 / 3)


def test_all_observed_identity():
    data = full_data()
    est = aipw_estimate(data, 0.7 * np.arange(25.0), np.ones(25))
    assert est.theta_hat == np.mean(data.y)
    assert est.sigma2_hat == np.var(data.y, ddof=1)
    assert est.response_rate == 1.0


def test_zero_imputation_is_ipw():
    rng = np.random.default_rng(1)
    d = (rng.uniform(size=30) < 0.6).astype(int)
    data = IncompleteDataset(rng.standard_normal((30, 2)), rng.standard_normal(30), d)
    pi = rng.uniform(0.2, 0.9, 30)
    est = aipw_estimate(data, 0.0, pi)
    assert est.theta_hat == pytest.approx(np.sum(np.nan_to_num(data.y) * d / pi) / 30, abs=1e-14)


def test_three_point_hand_case():
    data = IncompleteDataset(np.zeros((3, 1)), [1.0, 2.0, 0.0], [1, 1, 0])
    est = aipw_estimate(data, 1.5, np.full(3, 0.5))
    np.testing.assert_allclose(est.pseudo_values, [0.5, 2.5, 1.5], atol=1e-15)
    assert est.theta_hat == pytest.approx(1.5, abs=1e-15)
    assert est.sigma2_hat == pytest.approx(1.0, abs=1e-15)
    half = 1.96 * np.sqrt(1.0 / 3)
    assert (est.ci_low, est.ci_high) == pytest.approx((1.5 - half, 1.5 + half), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000))
def test_pseudo_value_mean_and_interval(n, seed):
    rng = np.random.default_rng(seed)
    d = (rng.uniform(size=n) < 0.7).astype(int)
    d[0] = 1
    data = IncompleteDataset(rng.standard_normal((n, 2)), rng.standard_normal(n), d)
    est = aipw_estimate(data, rng.standard_normal(n), rng.uniform(0.05, 1.0, n))
    assert abs(np.mean(est.pseudo_values) - est.theta_hat) <= 1e-12 * max(1, abs(est.theta_hat))
    assert est.sigma2_hat >= 0
    assert est.theta_hat - est.ci_low == pytest.approx(1.96 * np.sqrt(est.sigma2_hat / n))
    assert est.ci_high - est.theta_hat == pytest.approx(est.theta_hat - est.ci_low)


def test_propensity_domain_checks():
    data = full_data(4)
    for bad in ([0.5, 0.0, 0.5, 0.5], [0.5, 1.2, 0.5, 0.5], [0.5, np.nan, 0.5, 0.5]):
        with pytest.raises(DomainError):
            aipw_estimate(data, 0.0, bad)
    with pytest.raises(DomainError):
        aipw_estimate(data, 0.0, [0.5, 0.5])
    with pytest.warns(RuntimeWarning):
        est = aipw_estimate(data, 0.0, [0.005, 0.5, 0.5, 0.5])
    assert est.diagnostics["below_floor"] == 1


def test_weight_normalization_variant():
    rng = np.random.default_rng(2)
    d = np.array([1, 0, 1, 1, 0, 1])
    data = IncompleteDataset(rng.standard_normal((6, 1)), rng.standard_normal(6), d)
    pi = np.full(6, 0.5)
    a = aipw_estimate(data, 0.0, pi, normalize="weights")
    assert a.theta_hat == pytest.approx(np.nanmean(data.y), abs=1e-14)
    with pytest.raises(ValueError):
        aipw_estimate(data, 0.0, pi, normalize="other")


def test_cc_estimates():
    data = full_data()
    assert cc_estimate(data).estimate == pytest.approx(np.mean(data.y), abs=1e-15)
    one = IncompleteDataset(np.zeros((4, 1)), [0.0, 3.5, 0.0, 0.0], [0, 1, 0, 0])
    assert cc_estimate(one).estimate == 3.5


def test_ps_constant_propensity_equals_cc():
    rng = np.random.default_rng(3)
    d = (rng.uniform(size=40) < 0.6).astype(int)
    data = IncompleteDataset(rng.standard_normal((40, 2)), rng.standard_normal(40), d)
    rate = d.mean()
    model = PropensityModel(float(np.log(rate / (1 - rate))), np.zeros(2), 0.0, None, True, 1)
    assert ps_estimate(data, model).estimate == pytest.approx(cc_estimate(data).estimate, abs=1e-12)
    assert ps_estimate(full_data()).estimate == pytest.approx(np.mean(full_data().y))


def test_ps_reports_failure_when_p_exceeds_n():
    rng = np.random.default_rng(4)
    d = (rng.uniform(size=30) < 0.5).astype(int)
    data = IncompleteDataset(rng.standard_normal((30, 40)), rng.standard_normal(30), d)
    rep = ps_estimate(data)
    assert not rep.converged and rep.diagnostics["reason"] == "p >= n"


def test_di_estimates():
    data = full_data()
    assert di_estimate(data).estimate == pytest.approx(np.mean(data.y), abs=1e-15)
    x = np.random.default_rng(5).standard_normal((5, 2))
    part = IncompleteDataset(x, [2.0, 0, 0, 0, 0], [1, 0, 0, 0, 0])

    class Const:
        def predict_full(self, x):
            return np.full(len(x), -1.0)

    assert di_estimate(part, Const()).estimate == pytest.approx((2.0 - 4.0) / 5)


def test_naipw_estimates():
    data = full_data()
    assert naipw_estimate(data).estimate == pytest.approx(np.mean(data.y), abs=1e-15)
    sim = generate(SimulationSpec("M1", "R1", 300, 6, 1))
    rep = naipw_estimate(sim.data)
    assert rep.converged and np.isfinite(rep.estimate)
    f = fit_full_krr(*sim.data.complete_cases())
    mle = fit_logistic_mle(sim.data.x, sim.data.delta)
    assert naipw_estimate(sim.data, f, mle).estimate == rep.estimate


def test_prop_all_observed_is_sample_mean():
    data = full_data(40, 4, 6)
    est = prop_estimate(data, FAST)
    assert abs(est.theta_hat - np.mean(data.y)) <= 1e-10


def test_prop_pipeline_small_instance():
    sim = generate(SimulationSpec("M1", "R1", 400, 15, 2))
    est = prop_estimate(sim.data, FAST)
    assert np.isfinite(est.theta_hat) and est.sigma2_hat > 0
    assert set(est.diagnostics["active_set"]) >= {0, 1, 2, 3}
    assert est.diagnostics["propensity"].converged
    assert est.ci_low < est.theta_hat < est.ci_high


def test_prop_clamp_is_opt_in():
    sim = generate(SimulationSpec("M1", "R1", 200, 6, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        prop_estimate(sim.data, FAST, lam2=0.0)
    rng = np.random.default_rng(9)
    x = rng.uniform(-0.5, 0.5, (300, 3))
    d = (x[:, 0] + 0.02 * rng.standard_normal(300) > -0.2).astype(int)
    data = IncompleteDataset(x, x[:, 1], d)
    with pytest.warns(RuntimeWarning, match="clamped"):
        prop_estimate(data, FAST, lam2=0.0, clamp_propensity=True)
    est = prop_estimate(data, FAST, lam2=0.0)
    pi = est.diagnostics["propensity"].predict(x)
    assert pi.min() < 0.01 or pi.max() > 0.99


def _mc_mean(estimates):
    e = np.asarray(estimates)
    return e.mean(), e.std(ddof=1) / np.sqrt(e.size)


def test_unbiased_with_true_propensity():
    out = []
    for rep in range(200):
        sim = generate(SimulationSpec("M1", "R1", 500, 4, (77, rep)))
        f0 = 1.0 + sim.data.x[:, 1]
        out.append(aipw_estimate(sim.data, f0, sim.true_prob).theta_hat)
    mean, se = _mc_mean(out)
    assert abs(mean) <= 3 * se


def test_unbiased_with_true_regression():
    out = []
    for rep in range(200):
        sim = generate(SimulationSpec("M1", "R1", 500, 4, (78, rep)))
        x = sim.data.x
        pi = 0.3 + 0.4 / (1 + np.exp(-3 * x[:, 3]))
        out.append(aipw_estimate(sim.data, mean_m1(x), pi).theta_hat)
    mean, se = _mc_mean(out)
    assert abs(mean) <= 3 * se


def test_true_components_are_consistent():
    sim = generate(SimulationSpec("M1", "R1", 20_000, 4, 5))
    est = aipw_estimate(sim.data, mean_m1(sim.data.x), prob_r1(sim.data.x))
    assert abs(est.theta_hat) <= 4 * est.std_error
