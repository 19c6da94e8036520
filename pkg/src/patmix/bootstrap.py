"""Empirical bootstrap over observed rows with percentile intervals.

Replicate b's output depends only on (data, config, master seed, b): the
master seed is spawned into one stream per replicate up front, so results
are identical for any worker count and unaffected by other replicates.
Several functionals can share one bootstrap pass; the expensive Monte
Carlo completion is done once per replicate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .dataio import ObservedSample
from .estimator import (
    CompletedSample,
    EstimationError,
    FunctionalLike,
    Restriction,
    complete_sample,
    evaluate_functional,
)
from .kernels import bandwidth_vector

MAX_FAILED_FRACTION = 0.01


class BootstrapError(RuntimeError):
    pass


@dataclass(frozen=True)
class BandwidthPolicy:
    """How kernels are built for each (re)sample.

    mode "silverman" recomputes bandwidths on every bootstrap resample;
    "frozen" reuses the original sample's bandwidths; "fixed" uses the
    given per-variable values everywhere.
    """

    mode: str = "silverman"
    fixed: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.mode not in ("silverman", "frozen", "fixed"):
            raise BootstrapError(f"unknown bandwidth policy {self.mode!r}")
        if self.mode == "fixed" and self.fixed is None:
            raise BootstrapError("fixed bandwidth policy needs values")

    def build(self, sample: ObservedSample, original: Optional[ObservedSample] = None):
        if self.mode == "fixed":
            return bandwidth_vector(sample.values, sample.schema, {"fixed": self.fixed})
        if self.mode == "frozen" and original is not None:
            return bandwidth_vector(original.values, original.schema, None)
        return bandwidth_vector(sample.values, sample.schema, None)


@dataclass
class BootstrapResult:
    point: float
    replicates: np.ndarray  # successful replicate values, in replicate order
    lower: float
    upper: float
    alpha: float
    B: int
    V: int
    seed: int
    failed_replicates: list[int] = field(default_factory=list)

    def to_record(self, restriction_name: str, functional_name: str) -> dict:
        return {
            "restriction": restriction_name,
            "functional": functional_name,
            "estimate": self.point,
            "lower": self.lower,
            "upper": self.upper,
            "alpha": self.alpha,
            "B": self.B,
            "V": self.V,
            "seed": self.seed,
            "failed_replicates": list(self.failed_replicates),
            "replicates": [float(t) for t in self.replicates],
        }


def resample(sample: ObservedSample, rng: np.random.Generator) -> ObservedSample:
    """n rows drawn uniformly with replacement; patterns travel with rows."""
    idx = rng.integers(0, sample.n, size=sample.n)
    return sample.subset(idx)


def percentile_interval(replicates: Sequence[float], alpha: float) -> tuple[float, float]:
    """Left-continuous generalized inverse of the replicate ECDF at alpha/2
    and 1 - alpha/2; endpoints are always replicate values."""
    if not 0 < alpha < 1:
        raise BootstrapError(f"alpha must be in (0, 1), got {alpha}")
    reps = np.sort(np.asarray(replicates, dtype=float))
    B = reps.size
    if B < 2:
        raise BootstrapError("need at least 2 replicates")

    def inv(p: float) -> float:
        # smallest t with ECDF(t) >= p; ECDF(reps[k]) = (k+1)/B
        k = int(np.ceil(p * B)) - 1
        return float(reps[max(k, 0)])

    return inv(alpha / 2.0), inv(1.0 - alpha / 2.0)


def _one_replicate(sample, restriction, policy, functionals, V, child_seed):
    rng = np.random.default_rng(child_seed)
    star = resample(sample, rng)
    kernels = policy.build(star, original=sample)
    completed = complete_sample(star, restriction, V, kernels, rng)
    return [evaluate_functional(completed, f) for f in functionals]


def run_bootstrap_multi(
    sample: ObservedSample,
    restriction: Restriction,
    policy: BandwidthPolicy,
    functionals: Sequence[FunctionalLike],
    V: int,
    B: int,
    alpha: float,
    seed: int,
    n_jobs: int = 1,
    point_completed: Optional[CompletedSample] = None,
) -> list[BootstrapResult]:
    """One bootstrap pass serving several functionals.

    Each replicate resamples the rows, rebuilds kernels per the bandwidth
    policy, completes the resample once, and evaluates every functional on
    it.  Replicates whose donor pools are empty in the resample are
    recorded as failed; the run aborts when more than 1% fail.
    """
    if B < 2:
        raise BootstrapError("B must be >= 2")
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(B + 1)

    if point_completed is None:
        kernels = policy.build(sample)
        point_completed = complete_sample(sample, restriction, V, kernels, children[0])
    points = [evaluate_functional(point_completed, f) for f in functionals]

    def task(b):
        try:
            return b, _one_replicate(
                sample, restriction, policy, functionals, V, children[b + 1]
            ), None
        except EstimationError as exc:
            return b, None, str(exc)

    if n_jobs == 1:
        outcomes = [task(b) for b in range(B)]
    else:
        outcomes = Parallel(n_jobs=n_jobs)(delayed(task)(b) for b in range(B))

    failed = [b for b, vals, err in outcomes if vals is None]
    if len(failed) > MAX_FAILED_FRACTION * B:
        errs = {err for _, vals, err in outcomes if vals is None}
        raise BootstrapError(
            f"{len(failed)} of {B} bootstrap replicates failed "
            f"(> {MAX_FAILED_FRACTION:.0%}): {sorted(errs)}"
        )
    results = []
    for fi, point in enumerate(points):
        reps = np.asarray([vals[fi] for _, vals, err in outcomes if vals is not None])
        lower, upper = percentile_interval(reps, alpha)
        results.append(
            BootstrapResult(
                point=point,
                replicates=reps,
                lower=lower,
                upper=upper,
                alpha=alpha,
                B=B,
                V=V,
                seed=seed,
                failed_replicates=failed,
            )
        )
    return results


def run_bootstrap(
    sample: ObservedSample,
    restriction: Restriction,
    policy: BandwidthPolicy,
    functional: FunctionalLike,
    V: int,
    B: int,
    alpha: float,
    seed: int,
    n_jobs: int = 1,
    point_completed: Optional[CompletedSample] = None,
) -> BootstrapResult:
    """Bootstrap percentile interval for a single functional."""
    return run_bootstrap_multi(
        sample, restriction, policy, [functional], V, B, alpha, seed,
        n_jobs=n_jobs, point_completed=point_completed,
    )[0]
