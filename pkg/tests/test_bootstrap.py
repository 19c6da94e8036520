"""Row bootstrap: resampling, percentile intervals, determinism, failure policy."""

import numpy as np
import pytest

from helpers import monotone_sample, sample_from_values
from patmix.bootstrap import (
    BandwidthPolicy,
    BootstrapError,
    percentile_interval,
    resample,
    run_bootstrap,
    run_bootstrap_multi,
)
from patmix.dataio import FunctionalSpec
from patmix.kernels import silverman_bandwidth
from patmix.restrictions import MonotoneRestriction

MEAN_X2 = FunctionalSpec("mean", "X2")


def test_percentile_interval_textbook_example():
    reps = np.arange(1, 101, dtype=float)
    lo, hi = percentile_interval(reps, 0.05)
    assert (lo, hi) == (3.0, 98.0)
    # order must not matter
    rng = np.random.default_rng(0)
    lo2, hi2 = percentile_interval(rng.permutation(reps), 0.05)
    assert (lo2, hi2) == (lo, hi)


def test_percentile_interval_edge_cases():
    assert percentile_interval([1.0, 2.0], 0.5) == (1.0, 2.0)
    with pytest.raises(BootstrapError):
        percentile_interval([1.0], 0.05)
    with pytest.raises(BootstrapError):
        percentile_interval([1.0, 2.0], 1.5)


def test_resample_row_absence_probability():
    sample = monotone_sample(50, 2, seed=0)
    rng = np.random.default_rng(1)
    x1 = sample.values[:, 0]  # unique per row, always observed
    absent = []
    for _ in range(400):
        drawn = set(resample(sample, rng).values[:, 0])
        absent.append(np.mean([v not in drawn for v in x1]))
    # each row is absent with probability (1 - 1/n)^n ~ e^-1
    assert np.mean(absent) == pytest.approx((1 - 1 / 50) ** 50, abs=0.02)


def test_bandwidth_policy_modes():
    sample = monotone_sample(60, 2, seed=2)
    rng = np.random.default_rng(3)
    star = resample(sample, rng)
    recomputed = BandwidthPolicy("silverman").build(star, original=sample)
    frozen = BandwidthPolicy("frozen").build(star, original=sample)
    fixed = BandwidthPolicy("fixed", fixed=(0.3, 0.4)).build(star, original=sample)
    assert recomputed[0].bandwidth == pytest.approx(
        silverman_bandwidth(star.values[:, 0])
    )
    assert frozen[0].bandwidth == pytest.approx(
        silverman_bandwidth(sample.values[:, 0])
    )
    assert frozen[0].bandwidth != recomputed[0].bandwidth
    assert [k.bandwidth for k in fixed] == [0.3, 0.4]
    with pytest.raises(BootstrapError):
        BandwidthPolicy("magic")
    with pytest.raises(BootstrapError):
        BandwidthPolicy("fixed")


def test_bootstrap_is_deterministic_in_seed_and_workers():
    sample = monotone_sample(40, 2, seed=4)
    rest = MonotoneRestriction("AC")
    kwargs = dict(V=10, B=20, alpha=0.1, seed=7)
    a = run_bootstrap(sample, rest, BandwidthPolicy(), MEAN_X2, **kwargs)
    b = run_bootstrap(sample, rest, BandwidthPolicy(), MEAN_X2, **kwargs)
    c = run_bootstrap(sample, rest, BandwidthPolicy(), MEAN_X2, n_jobs=2, **kwargs)
    assert np.array_equal(a.replicates, b.replicates)
    assert np.array_equal(a.replicates, c.replicates)
    assert (a.point, a.lower, a.upper) == (c.point, c.lower, c.upper)
    d = run_bootstrap(sample, rest, BandwidthPolicy(), MEAN_X2, V=10, B=20,
                      alpha=0.1, seed=8)
    assert not np.array_equal(a.replicates, d.replicates)


def test_interval_brackets_point_and_respects_alpha_ordering():
    sample = monotone_sample(80, 2, seed=5)
    rest = MonotoneRestriction("AC")
    res = run_bootstrap(sample, rest, BandwidthPolicy(), MEAN_X2, V=10, B=60,
                        alpha=0.05, seed=1)
    assert res.lower <= res.upper
    assert res.lower <= np.median(res.replicates) <= res.upper
    wide = percentile_interval(res.replicates, 0.05)
    narrow = percentile_interval(res.replicates, 0.5)
    assert wide[0] <= narrow[0] and narrow[1] <= wide[1]


def test_multi_functional_shares_replicates():
    sample = monotone_sample(50, 2, seed=6)
    rest = MonotoneRestriction("AC")
    both = run_bootstrap_multi(
        sample, rest, BandwidthPolicy(),
        [MEAN_X2, FunctionalSpec("quantile", "X2", p=0.5)],
        V=10, B=15, alpha=0.1, seed=2,
    )
    single = run_bootstrap(sample, rest, BandwidthPolicy(), MEAN_X2,
                           V=10, B=15, alpha=0.1, seed=2)
    assert np.array_equal(both[0].replicates, single.replicates)
    assert both[0].point == single.point
    assert len(both) == 2


def test_record_serialization():
    sample = monotone_sample(30, 2, seed=7)
    res = run_bootstrap(sample, MonotoneRestriction("NC"), BandwidthPolicy(),
                        MEAN_X2, V=5, B=10, alpha=0.1, seed=0)
    rec = res.to_record("NC", "mean(X2)")
    assert rec["restriction"] == "NC" and rec["functional"] == "mean(X2)"
    assert rec["B"] == 10 and rec["V"] == 5 and len(rec["replicates"]) == 10
    assert rec["failed_replicates"] == []


def test_fragile_donor_pool_aborts():
    # a single complete case: resamples that drop it cannot impute under CC
    values = np.array(
        [[0.0, 1.0]] + [[float(i), np.nan] for i in range(9)]
    )
    sample = sample_from_values(values)
    with pytest.raises(BootstrapError, match="replicates failed"):
        run_bootstrap(
            sample, MonotoneRestriction("CC"),
            BandwidthPolicy("fixed", fixed=(0.5, 0.5)), MEAN_X2,
            V=4, B=50, alpha=0.1, seed=3,
        )


def test_b_lower_bound():
    sample = monotone_sample(20, 2, seed=8)
    with pytest.raises(BootstrapError):
        run_bootstrap(sample, MonotoneRestriction("AC"), BandwidthPolicy(),
                      MEAN_X2, V=2, B=1, alpha=0.1, seed=0)
