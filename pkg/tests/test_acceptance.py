"""Simulation-scale acceptance checks.

Each test prints one scorecard line to the terminal, so a full run of this
module reads as a nine-line summary.  These checks exercise the whole
pipeline end to end; the unit modules cover the same components at small
scale.  The two longest checks (estimator consistency, bootstrap
coverage) take several minutes each on one core.
"""

import json
import math

import numpy as np
from scipy import integrate, stats

from helpers import monotone_sample, nonmonotone_sample, sample_from_values
from patmix.bootstrap import BandwidthPolicy, run_bootstrap
from patmix.cc_oracle import cc_closed_form_mean
from patmix.cli import main
from patmix.dataio import FunctionalSpec
from patmix.estimator import (
    build_plan,
    complete_sample,
    conditional_cdf_1step,
    donor_weights,
    evaluate_functional,
    mc_cdf,
)
from patmix.kernels import KernelSpec, bandwidth_vector, kernel_eval, silverman_bandwidth
from patmix.restrictions import MonotoneRestriction, make_restriction
from patmix.simulate import parse_sim_config, simulate_trial


def _report(capsys, ok, text):
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {text}")
    assert ok, text


def _four_pattern_sample(seed, n=200):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, 2))
    x[:, 1] += 0.7 * x[:, 0] + 0.5
    pats = rng.choice(["00", "10", "01", "11"], size=n, p=[0.1, 0.2, 0.15, 0.55])
    for i, r in enumerate(pats):
        if r[0] == "0":
            x[i, 0] = np.nan
        if r[1] == "0":
            x[i, 1] = np.nan
    return sample_from_values(x)


def _mar_trial(n, seed):
    cfg = parse_sim_config(
        {
            "arms": [{"name": "a", "means": [0.0, 0.5, 1.0]}],
            "n_per_arm": n,
            "noise_sd": 1.0,
            "ar": 0.5,
            "dropout": {"type": "monotone_logistic", "intercept": -1.2, "slope": 0.3},
            "seed": seed,
        }
    )
    return simulate_trial(cfg).observed_sample()


def test_01_closed_form_cc_mean_within_monte_carlo_error(capsys):
    # tolerance: 4 Monte Carlo standard errors at V=5000; at least 19 of
    # 20 completion seeds must agree with the closed-form value
    sample = _four_pattern_sample(100)
    kernels = bandwidth_vector(sample.values, sample.schema, None)
    oracle = cc_closed_form_mean(sample, kernels)
    restriction = make_restriction(
        {"kind": "CC"}, sample.patterns, 2, force_nonmonotone=True
    )
    hits = 0
    for seed in range(20):
        completed = complete_sample(sample, restriction, 5000, kernels, seed)
        per_completion = completed.completions[:, :, 1].mean(axis=0)
        mc = per_completion.mean()
        se = per_completion.std(ddof=1) / math.sqrt(5000)
        hits += abs(mc - oracle) <= 4 * se
    _report(
        capsys, hits >= 19,
        f"1/9 closed-form CC mean vs Monte Carlo (4 se, V=5000): {hits}/20 seeds agree",
    )


def test_02_first_step_draws_follow_the_mixture_cdf(capsys):
    # tolerance: Kolmogorov-Smirnov at the 1% level on 1e5 draws, for 10
    # random incomplete rows under each of CC, AC, NC
    sample = monotone_sample(60, 3, seed=17)
    kernels = bandwidth_vector(sample.values, sample.schema, None)
    incomplete = [i for i, p in enumerate(sample.patterns) if p != "111"]
    rows = np.random.default_rng(1).choice(incomplete, size=10, replace=False)
    worst = 1.0
    for kind in ("CC", "AC", "NC"):
        restriction = MonotoneRestriction(kind)
        plan = build_plan(sample, restriction)
        completed = complete_sample(sample, restriction, 100000, kernels, seed=23)
        for i in rows:
            step = plan[sample.patterns[i]][0]
            draws = completed.completions[i, :, step.target]

            def cdf(x, step=step, i=i):
                return conditional_cdf_1step(
                    sample, list(step.prefix), sample.values[i, list(step.prefix)],
                    step.target, step.donor_rows, kernels, np.atleast_1d(x),
                )

            worst = min(worst, stats.ks_1samp(draws, cdf).pvalue)
    _report(
        capsys, worst > 0.01,
        f"2/9 sampler law (KS, 1e5 draws, 10 rows x CC/AC/NC): worst p = {worst:.3f}",
    )


def test_03_observed_data_is_reproduced_exactly(capsys):
    # tolerance: zero; observed cells must be bit-identical and observed
    # box probabilities must equal the empirical frequencies exactly
    rng = np.random.default_rng(7)
    exact = True
    cases = [
        (monotone_sample(50, 3, seed=1), {"kind": "AC"}, 5),
        (monotone_sample(35, 4, seed=2), {"kind": "CC"}, 9),
        (monotone_sample(80, 2, seed=3), {"kind": "kNC", "k": 1}, 3),
        (nonmonotone_sample(60, 3, seed=4,
                            pattern_probs={"111": 0.5, "101": 0.3, "010": 0.2}),
         {"kind": "AC"}, 7),
    ]
    for sample, spec, V in cases:
        kernels = bandwidth_vector(sample.values, sample.schema, None)
        restriction = make_restriction(spec, sample.patterns, sample.d)
        completed = complete_sample(
            sample, restriction, V, kernels, seed=int(rng.integers(1 << 30))
        )
        obs = np.isfinite(sample.values)
        mask = np.repeat(obs[:, None, :], V, axis=1)
        rep = np.repeat(sample.values[:, None, :], V, axis=1)
        exact &= bool(np.array_equal(completed.completions[mask], rep[mask]))
        for r in set(sample.patterns):
            box = np.where([c == "1" for c in r], np.nanmedian(sample.values, axis=0), np.inf)
            rows = np.asarray([p == r for p in sample.patterns])
            inside = np.all((sample.values <= box) | ~np.isfinite(sample.values), axis=1)
            exact &= mc_cdf(completed, box, r=r) == (inside & rows).sum() / sample.n
    _report(capsys, exact, "3/9 finite-sample saturation: observed data reproduced exactly")


def test_04_donor_weights_form_a_simplex_on_the_pool(capsys):
    # tolerance: 1e-12 on the weight sum, over 1e4 randomized calls
    sample = monotone_sample(40, 3, seed=5)
    kernels = bandwidth_vector(sample.values, sample.schema, None)
    complete_rows = np.flatnonzero([p == "111" for p in sample.patterns])
    rng = np.random.default_rng(9)
    worst_gap, ok = 0.0, True
    for _ in range(10000):
        k = int(rng.integers(0, 3))
        prefix = sorted(rng.choice(3, size=k, replace=False).tolist())
        pool = rng.choice(
            complete_rows, size=int(rng.integers(2, complete_rows.size)), replace=False
        )
        query = rng.normal(0, 2, k)
        w = donor_weights(sample, prefix, query, np.sort(pool), kernels)
        gap = abs(w.sum() - 1.0)
        worst_gap = max(worst_gap, gap)
        ok &= gap <= 1e-12 and np.all(w >= 0)
        ok &= set(np.flatnonzero(w > 0)) <= set(pool.tolist())
    _report(
        capsys, ok,
        f"4/9 donor weights: 10^4 randomized simplex checks, worst |sum-1| = {worst_gap:.2e}",
    )


def test_05_error_shrinks_with_sample_size_under_correct_restriction(capsys):
    # tolerance: median absolute error decreasing over n in {250, 1000,
    # 4000} and below 0.05 sd at n = 4000, over 50 replicates each
    f = FunctionalSpec("mean", "X3")
    truth, medians = 1.0, []
    for n in (250, 1000, 4000):
        errs = []
        for rep in range(50):
            sample = _mar_trial(n, seed=1000 + rep)
            kernels = bandwidth_vector(sample.values, sample.schema, None)
            completed = complete_sample(
                sample, MonotoneRestriction("AC"), 100, kernels, seed=rep
            )
            errs.append(abs(evaluate_functional(completed, f) - truth))
        medians.append(float(np.median(errs)))
    ok = medians[0] > medians[1] > medians[2] and medians[2] < 0.05
    _report(
        capsys, ok,
        "5/9 consistency: median |error| = "
        + ", ".join(f"{m:.4f}" for m in medians)
        + " at n = 250, 1000, 4000 (limit 0.05 sd)",
    )


def test_06_bootstrap_intervals_cover_the_true_mean(capsys):
    # tolerance: empirical coverage of nominal 95% intervals within
    # [0.90, 0.99] over 200 simulated datasets (n=300, V=100, B=300)
    f = FunctionalSpec("mean", "X3")
    truth, hits = 1.0, 0
    for rep in range(200):
        sample = _mar_trial(300, seed=5000 + rep)
        res = run_bootstrap(
            sample, MonotoneRestriction("AC"), BandwidthPolicy(), f,
            V=100, B=300, alpha=0.05, seed=rep,
        )
        hits += res.lower <= truth <= res.upper
    coverage = hits / 200
    _report(
        capsys, 0.90 <= coverage <= 0.99,
        f"6/9 bootstrap coverage of 95% intervals: {coverage:.3f} (limits [0.90, 0.99])",
    )


def test_07_equivalent_restrictions_are_byte_identical(capsys):
    # tolerance: zero; matched seeds must give identical completions and
    # identical bootstrap intervals
    sample = monotone_sample(120, 5, seed=8)
    kernels = bandwidth_vector(sample.values, sample.schema, None)
    ac = make_restriction({"kind": "AC"}, sample.patterns, 5)
    knc5 = make_restriction({"kind": "kNC", "k": 5}, sample.patterns, 5)
    ac_general = make_restriction(
        {"kind": "AC"}, sample.patterns, 5, force_nonmonotone=True
    )
    a = complete_sample(sample, ac, 8, kernels, seed=2).completions
    b = complete_sample(sample, knc5, 8, kernels, seed=2).completions
    c = complete_sample(sample, ac_general, 8, kernels, seed=2).completions
    same = np.array_equal(a, b) and np.array_equal(a, c)
    f = FunctionalSpec("mean", "X5")
    r1 = run_bootstrap(sample, ac, BandwidthPolicy(), f, V=5, B=40, alpha=0.05, seed=4)
    r2 = run_bootstrap(sample, knc5, BandwidthPolicy(), f, V=5, B=40, alpha=0.05, seed=4)
    same &= (r1.point, r1.lower, r1.upper) == (r2.point, r2.lower, r2.upper)
    same &= bool(np.array_equal(r1.replicates, r2.replicates))
    _report(
        capsys, same,
        "7/9 equivalences: kNC(k=d) = AC and general engine = monotone engine, byte-identical",
    )


def test_08_sensitivity_workflow_detects_a_real_effect(capsys, tmp_path):
    # tolerance: final-time treatment-effect intervals exclude zero under
    # all of AC, 3NC, NC in at least 18 of 20 simulated trials
    # (effect -10, sd 20, 250 per arm, treatment-dependent dropout)
    hits = 0
    for seed in range(20):
        base = tmp_path / f"s{seed}"
        base.mkdir()
        sim = {
            "arms": [
                {"name": "ctl", "means": [50.0, 46.0, 42.0]},
                {"name": "act", "means": [50.0, 44.0, 40.0]},
                {"name": "new", "means": [50.0, 41.0, 32.0]},
            ],
            "n_per_arm": 250, "noise_sd": 20.0, "ar": 0.6,
            "dropout": {
                "type": "monotone_logistic", "intercept": -2.5, "slope": 0.02,
                "arm_intercepts": {"new": -2.0, "act": -2.8},
            },
            "seed": seed,
        }
        run = {
            "schema": {
                "variables": [{"name": "X1"}, {"name": "X2"}, {"name": "X3"}],
                "group_column": "arm",
            },
            "restrictions": ["AC", "3NC", "NC"],
            "functionals": [
                {"mean_difference": {"var": v, "group_a": "new", "group_b": "ctl"}}
                for v in ("X1", "X2", "X3")
            ],
            "V": 25, "B": 100, "alpha": 0.05, "seed": seed,
        }
        (base / "sim.json").write_text(json.dumps(sim))
        (base / "run.json").write_text(json.dumps(run))
        assert main(["simulate", "--config", str(base / "sim.json"),
                     "--out", str(base / "t")]) == 0
        assert main(["sensitivity", "--data", str(base / "t.masked.csv"),
                     "--config", str(base / "run.json"),
                     "--out", str(base / "r"), "--no-figure"]) == 0
        results = json.loads((base / "r.json").read_text())["results"]
        final = [r for r in results if r["functional"].startswith("mean_difference(X3")]
        assert len(final) == 3
        hits += all(r["upper"] < 0 or r["lower"] > 0 for r in final)
    _report(
        capsys, hits >= 18,
        f"8/9 sensitivity workflow: final-time effect detected under all "
        f"restrictions in {hits}/20 trials",
    )


def test_09_kernel_normalization(capsys):
    # tolerances: exact for the categorical sum, 1e-6 for the Gaussian
    # integral, 1e-12 for the bandwidth rule
    ok = True
    for C in (2, 4, 7):
        spec = KernelSpec("aitchison_aitken", 0.3 + 0.7 / C, n_categories=C)
        for center in range(C):
            ok &= math.fsum(kernel_eval(spec, x, center) for x in range(C)) == 1.0
    gauss = KernelSpec("gaussian", 0.42)
    integral, _ = integrate.quad(lambda x: kernel_eval(gauss, x, -0.7), -np.inf, np.inf)
    ok &= abs(integral - 1.0) < 1e-6
    v = np.array([0.3, 1.1, 1.7, 2.0, 3.4, 5.1, 6.0, 8.2])
    hand = 0.9 * min(
        np.std(v, ddof=1), (np.percentile(v, 75) - np.percentile(v, 25)) / 1.34
    ) * v.size ** (-0.2)
    ok &= abs(silverman_bandwidth(v) - hand) < 1e-12
    _report(
        capsys, ok,
        "9/9 kernels: categorical mass exact, Gaussian integral 1e-6, bandwidth rule 1e-12",
    )
