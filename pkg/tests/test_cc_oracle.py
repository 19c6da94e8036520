"""Closed-form complete-case mean: weight identities and oracle agreement."""

import numpy as np
import pytest
from scipy import stats

from helpers import sample_from_values
from patmix.cc_oracle import cc_closed_form_mean, cc_mean_weights
from patmix.estimator import EstimationError
from patmix.kernels import KernelSpec


def _two_var_sample(seed, n=60, p=(0.15, 0.2, 0.1, 0.55)):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, 2))
    x[:, 1] += 0.7 * x[:, 0]
    pats = rng.choice(["00", "10", "01", "11"], size=n, p=list(p))
    for i, r in enumerate(pats):
        if r[0] == "0":
            x[i, 0] = np.nan
        if r[1] == "0":
            x[i, 1] = np.nan
    return sample_from_values(x)


KERNELS = [KernelSpec("gaussian", 0.4), KernelSpec("gaussian", 0.5)]


def test_weights_sum_to_one():
    for seed in range(5):
        sample = _two_var_sample(seed)
        w = cc_mean_weights(sample, KERNELS)
        assert w.omega.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(w.omega >= 0)
        # weight only where the second variable is observed
        x2_missing = ~np.isfinite(sample.values[:, 1])
        assert np.all(w.omega[x2_missing] == 0)


def test_all_complete_reduces_to_sample_mean():
    rng = np.random.default_rng(3)
    x = rng.normal(1.0, 2.0, (25, 2))
    sample = sample_from_values(x)
    w = cc_mean_weights(sample, KERNELS)
    assert np.allclose(w.omega, 1.0 / 25)
    assert cc_closed_form_mean(sample, KERNELS) == pytest.approx(x[:, 1].mean())


def test_weights_match_independent_two_route_computation():
    # recompute alpha and omega from scratch with plain normal densities
    sample = _two_var_sample(11)
    vals, pats = sample.values, np.asarray(sample.patterns, dtype=object)
    i10 = np.flatnonzero(pats == "10")
    i11 = np.flatnonzero(pats == "11")
    i01 = np.flatnonzero(pats == "01")
    i00 = np.flatnonzero(pats == "00")
    alpha = np.zeros(sample.n)
    for j in i11:
        total = 0.0
        for i in i10:
            num = stats.norm.pdf(vals[i, 0], loc=vals[j, 0], scale=0.4)
            den = stats.norm.pdf(vals[i, 0], loc=vals[i11, 0], scale=0.4).sum()
            total += num / den
        alpha[j] = total / i10.size
    omega = np.zeros(sample.n)
    omega[i11] = (1.0 + i00.size / i11.size + i10.size * alpha[i11]) / sample.n
    omega[i01] = 1.0 / sample.n
    got = cc_mean_weights(sample, KERNELS)
    assert np.allclose(got.alpha, alpha, atol=1e-10)
    assert np.allclose(got.omega, omega, atol=1e-10)
    want_mean = float(np.nansum(np.where(omega > 0, vals[:, 1], 0.0) * omega))
    assert cc_closed_form_mean(sample, KERNELS) == pytest.approx(want_mean, abs=1e-12)


def test_oracle_requires_two_variables_and_complete_cases():
    rng = np.random.default_rng(0)
    three = sample_from_values(rng.normal(0, 1, (10, 3)))
    with pytest.raises(EstimationError, match="2 variables"):
        cc_mean_weights(three, KERNELS + [KernelSpec("gaussian", 0.5)])
    values = np.array([[1.0, np.nan], [np.nan, 2.0]])
    no_cc = sample_from_values(values)
    with pytest.raises(EstimationError, match="complete case"):
        cc_mean_weights(no_cc, KERNELS)
