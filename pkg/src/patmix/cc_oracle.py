"""Closed-form complete-case estimators for two continuous variables.

Under the complete-case restriction with d = 2, the mean of the second
variable has an analytic form: a weighted average of the observed values
where the weights fold the kernel-smoothed extrapolation into per-row
constants.  This provides an independent oracle for the Monte Carlo
completion machinery; it is exposed through the `validate` CLI command
and is not part of the estimation path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataio import ObservedSample
from .estimator import EstimationError
from .kernels import KernelSpec, kernel_logpdf_matrix


@dataclass(frozen=True)
class CCWeights:
    omega: np.ndarray  # per-row weight, sums to 1
    alpha: np.ndarray  # per-row donor weight, nonzero only on complete cases
    counts: dict[str, int]  # pattern counts for 00/10/01/11


def _pattern_masks(sample: ObservedSample) -> dict[str, np.ndarray]:
    if sample.d != 2:
        raise EstimationError("closed-form CC oracle requires exactly 2 variables")
    pats = np.asarray(sample.patterns, dtype=object)
    return {r: pats == r for r in ("00", "10", "01", "11")}


def cc_mean_weights(sample: ObservedSample, kernels: Sequence[KernelSpec]) -> CCWeights:
    masks = _pattern_masks(sample)
    n = sample.n
    n00, n10, n01, n11 = (int(masks[r].sum()) for r in ("00", "10", "01", "11"))
    if n11 < 1:
        raise EstimationError("CC oracle needs at least one complete case")

    alpha = np.zeros(n)
    if n10 > 0:
        # alpha_j = (1/n10) sum_i K(X_i1; X_j1) I(R_i=10) / sum_k K(X_i1; X_k1) I(R_k=11)
        x1_10 = sample.values[masks["10"], 0]
        x1_11 = sample.values[masks["11"], 0]
        K = np.exp(kernel_logpdf_matrix(kernels[0], x1_10, x1_11))  # (n10, n11)
        denom = K.sum(axis=1)
        if np.any(denom <= 0):
            raise EstimationError("kernel denominator underflow in CC oracle")
        alpha[masks["11"]] = (K / denom[:, None]).sum(axis=0) / n10

    omega = np.zeros(n)
    omega[masks["11"]] = (1.0 + n00 / n11 + n10 * alpha[masks["11"]]) / n
    omega[masks["01"]] = 1.0 / n
    return CCWeights(
        omega=omega,
        alpha=alpha,
        counts={"00": n00, "10": n10, "01": n01, "11": n11},
    )


def cc_closed_form_mean(sample: ObservedSample, kernels: Sequence[KernelSpec]) -> float:
    """Closed-form CC estimate of the mean of the second variable."""
    w = cc_mean_weights(sample, kernels)
    x2 = np.where(np.isfinite(sample.values[:, 1]), sample.values[:, 1], 0.0)
    return float(np.dot(x2, w.omega))
