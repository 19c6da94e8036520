"""Nonparametric pattern-mixture inference for missing data.

Estimates the full-data distribution from an incomplete sample under a
donor-based identifying restriction, approximates functionals by Monte
Carlo completion, and attaches percentile-bootstrap confidence intervals.
"""

__version__ = "0.1.0"

from .bootstrap import (
    BandwidthPolicy,
    BootstrapResult,
    percentile_interval,
    resample,
    run_bootstrap,
    run_bootstrap_multi,
)
from .dataio import (
    FunctionalSpec,
    ObservedSample,
    RunConfig,
    Schema,
    Variable,
    load_config,
    load_dataset,
    write_results,
)
from .estimator import (
    CompletedSample,
    EstimationError,
    complete_sample,
    conditional_cdf_1step,
    donor_weights,
    evaluate_functional,
    evaluate_functional_averaged,
    full_density,
    mc_cdf,
    surrogate_density,
)
from .kernels import KernelSpec, bandwidth_vector, silverman_bandwidth
from .patterns import (
    Permutation,
    default_permutation,
    detect_monotone,
    hamming_distance,
    potential_donors,
    precedes,
)
from .restrictions import (
    MonotoneRestriction,
    NonmonotoneRestriction,
    make_restriction,
    monotone_donor_times,
    nonmonotone_donor_patterns,
    validate_restriction,
)
