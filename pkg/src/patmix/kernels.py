"""Per-variable kernels: Gaussian for continuous variables, Aitchison-Aitken
for unordered categorical ones.  Weight arithmetic stays in log space so
long conditioning prefixes cannot underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .dataio import Schema

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    family: str  # "gaussian" | "aitchison_aitken"
    bandwidth: float
    n_categories: Optional[int] = None

    def __post_init__(self):
        if self.family == "gaussian":
            if not self.bandwidth > 0:
                raise KernelError(f"gaussian bandwidth must be > 0, got {self.bandwidth}")
        elif self.family == "aitchison_aitken":
            C = self.n_categories
            if C is None or C < 2:
                raise KernelError("aitchison_aitken kernel needs n_categories >= 2")
            if not 1.0 / C <= self.bandwidth <= 1.0:
                raise KernelError(
                    f"aitchison_aitken bandwidth must be in [1/{C}, 1], "
                    f"got {self.bandwidth}"
                )
        else:
            raise KernelError(f"unknown kernel family {self.family!r}")


def kernel_eval(spec: KernelSpec, x: float, center: float) -> float:
    """Kernel density at x, centered at an observed value."""
    if spec.family == "gaussian":
        if not (math.isfinite(x) and math.isfinite(center)):
            raise KernelError("non-finite input to gaussian kernel")
        h = spec.bandwidth
        z = (x - center) / h
        return math.exp(-0.5 * z * z) / (h * math.sqrt(2.0 * math.pi))
    _check_category(spec, x)
    _check_category(spec, center)
    if x == center:
        return spec.bandwidth
    return (1.0 - spec.bandwidth) / (spec.n_categories - 1)


def kernel_logpdf_matrix(spec: KernelSpec, x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Log kernel density for every (query, center) pair; shape (len(x), len(centers))."""
    x = np.asarray(x, dtype=float)[:, None]
    centers = np.asarray(centers, dtype=float)[None, :]
    if spec.family == "gaussian":
        h = spec.bandwidth
        z = (x - centers) / h
        return -0.5 * z * z - (math.log(h) + LOG_SQRT_2PI)
    same = x == centers
    h = spec.bandwidth
    off = (1.0 - h) / (spec.n_categories - 1)
    with np.errstate(divide="ignore"):
        return np.where(same, math.log(h), np.log(off))


def kernel_cdf(spec: KernelSpec, x, centers) -> np.ndarray:
    """Gaussian kernel CDF at x for every center; shape (len(x), len(centers))."""
    if spec.family != "gaussian":
        raise KernelError("kernel_cdf is defined for continuous kernels only")
    x = np.atleast_1d(np.asarray(x, dtype=float))[:, None]
    centers = np.asarray(centers, dtype=float)[None, :]
    return ndtr((x - centers) / spec.bandwidth)


def kernel_sample(spec: KernelSpec, center: float, rng: np.random.Generator) -> float:
    """One draw from the kernel density centered at an observed value."""
    if spec.family == "gaussian":
        return float(center + spec.bandwidth * rng.standard_normal())
    return float(
        kernel_sample_categorical(
            spec, np.asarray([center]), np.asarray([rng.random()])
        )[0]
    )


def kernel_sample_gaussian(spec: KernelSpec, centers: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Map standard-normal draws z through the Gaussian kernel at each center."""
    return centers + spec.bandwidth * z


def kernel_sample_categorical(spec: KernelSpec, centers: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniform draws u through the Aitchison-Aitken kernel at each center.

    With probability h the center code is kept; otherwise the residual
    uniform picks one of the other C - 1 codes.
    """
    h, C = spec.bandwidth, spec.n_categories
    centers = np.asarray(centers, dtype=float)
    keep = u < h
    if h >= 1.0:
        return centers.copy()
    t = np.clip((u - h) / (1.0 - h), 0.0, np.nextafter(1.0, 0.0))
    k = np.floor(t * (C - 1))
    other = np.where(k >= centers, k + 1.0, k)
    return np.where(keep, centers, other)


def _check_category(spec: KernelSpec, x: float) -> None:
    if not (float(x).is_integer() and 0 <= x < spec.n_categories):
        raise KernelError(
            f"invalid category code {x!r} for a {spec.n_categories}-level variable"
        )


def silverman_bandwidth(values: Sequence[float]) -> float:
    """0.9 * min(sd, IQR/1.34) * m^(-1/5) over the nonmissing values."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    m = v.size
    if m < 2:
        raise KernelError(f"need at least 2 observed values, got {m}")
    sd = float(np.std(v, ddof=1))
    iqr = float(np.percentile(v, 75) - np.percentile(v, 25))
    spread = min(sd, iqr / 1.34)
    if spread == 0.0:
        spread = sd
    if spread == 0.0:
        raise KernelError("degenerate variable: all observed values identical")
    return 0.9 * spread * m ** (-0.2)


def log_product_kernel(
    specs: Sequence[KernelSpec],
    x_prefix: Sequence[float],
    center_prefix: Sequence[float],
) -> float:
    """Sum of log kernel densities over a conditioning prefix; 0 for the
    empty prefix, -inf allowed for categorical mismatches at h = 1."""
    if len(x_prefix) != len(center_prefix) or len(specs) != len(x_prefix):
        raise KernelError("prefix length mismatch")
    total = 0.0
    for spec, x, c in zip(specs, x_prefix, center_prefix):
        val = kernel_eval(spec, x, c)
        total += math.log(val) if val > 0 else -math.inf
    return total


DEFAULT_CATEGORICAL_BANDWIDTH = 0.9


def bandwidth_vector(
    sample_values: np.ndarray,
    schema: Schema,
    policy: Optional[dict] = None,
) -> list[KernelSpec]:
    """One KernelSpec per study variable.

    Continuous bandwidths follow Silverman's rule on each variable's
    observed values unless the policy fixes them; categorical bandwidths
    default to max(0.9, 1/C).
    """
    policy = policy or {"auto": "silverman"}
    fixed = policy.get("fixed")
    specs = []
    for j, var in enumerate(schema.variables):
        if var.vtype == "continuous":
            h = float(fixed[j]) if fixed is not None else silverman_bandwidth(
                sample_values[:, j]
            )
            specs.append(KernelSpec(family="gaussian", bandwidth=h))
        else:
            C = len(var.levels)
            h = float(fixed[j]) if fixed is not None else max(
                DEFAULT_CATEGORICAL_BANDWIDTH, 1.0 / C
            )
            specs.append(
                KernelSpec(family="aitchison_aitken", bandwidth=h, n_categories=C)
            )
    return specs
