"""Full-data distribution estimation by Monte Carlo completion.

The observed-data distribution is kept as the empirical distribution; the
extrapolation conditionals are donor-weighted kernel mixtures.  Each
incomplete row is completed V times by sequentially sampling its missing
coordinates: draw a donor row with probability proportional to the kernel
product over the conditioning prefix, then draw the new value from that
donor's kernel.

Both the monotone and the nonmonotone engine compile to the same step
plan (target coordinate, conditioning prefix, donor row pool per pattern)
and share one executor, so on monotone data with default permutations the
two produce bit-identical completions under matched seeds.  Randomness is
pre-drawn per (pattern, step, row, completion) in a fixed order that
depends only on the data's pattern structure, which makes completed
samples deterministic in (data, restriction, kernels, V, seed) and
identical for equivalent restrictions under matched seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .dataio import FunctionalSpec, ObservedSample
from .kernels import (
    KernelSpec,
    kernel_cdf,
    kernel_logpdf_matrix,
    kernel_sample_categorical,
)
from .patterns import detect_monotone, n_observed
from .restrictions import (
    MonotoneRestriction,
    NonmonotoneRestriction,
    monotone_donor_times,
    nonmonotone_donor_patterns,
)

# Cap on the size of (units x donors) work arrays; keeps peak memory modest
# at large n without changing results.
_CHUNK_ELEMENTS = 8_000_000


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Step:
    target: int  # 0-based column being imputed
    prefix: tuple[int, ...]  # 0-based conditioning columns, in order
    donor_rows: np.ndarray  # row indices of the donor pool in the data
    label: str


@dataclass
class CompletedSample:
    """V completions of every row; observed cells are copied verbatim."""

    base: ObservedSample
    completions: np.ndarray  # (n, V, d)
    V: int

    def pooled(self) -> np.ndarray:
        """All nV completed rows as a (n*V, d) matrix, grouped by row."""
        n, V, d = self.completions.shape
        return self.completions.reshape(n * V, d)

    def pooled_groups(self) -> Optional[np.ndarray]:
        if self.base.groups is None:
            return None
        return np.repeat(self.base.groups, self.V)

    def to_long_table(self) -> list[dict]:
        """Long-format export: one record per (row, completion)."""
        out = []
        names = self.base.schema.names
        for i in range(self.base.n):
            r = self.base.patterns[i]
            for v in range(self.V):
                rec = {"row_id": i, "completion_id": v, "pattern": r}
                for j, name in enumerate(names):
                    rec[name] = float(self.completions[i, v, j])
                    rec[f"{name}_imputed"] = r[j] == "0"
                out.append(rec)
        return out


Restriction = Union[MonotoneRestriction, NonmonotoneRestriction]


def build_plan(sample: ObservedSample, restriction: Restriction) -> dict[str, list[Step]]:
    """Per-pattern imputation steps with their donor row pools."""
    d = sample.d
    plan: dict[str, list[Step]] = {}
    if isinstance(restriction, MonotoneRestriction):
        tmap = detect_monotone(sample.patterns)
        if tmap is None:
            raise EstimationError(
                "monotone restriction applied to nonmonotone data"
            )
        T = np.array([tmap[r] for r in sample.patterns])
        for r in sorted(set(sample.patterns)):
            t = tmap[r]
            steps = []
            for s in range(t + 1, d + 1):
                donor_times = monotone_donor_times(restriction, t, s, d)
                rows = np.flatnonzero(np.isin(T, sorted(donor_times)))
                steps.append(
                    Step(
                        target=s - 1,
                        prefix=tuple(range(s - 1)),
                        donor_rows=rows,
                        label=f"(t={t}, s={s})",
                    )
                )
            if steps:
                plan[r] = steps
    else:
        pat_arr = np.asarray(sample.patterns, dtype=object)
        for r in sorted(set(sample.patterns)):
            pi = restriction.permutation_for(r)
            steps = []
            for j in range(n_observed(r) + 1, d + 1):
                donor_pats = nonmonotone_donor_patterns(restriction, r, j)
                rows = np.flatnonzero(np.isin(pat_arr, sorted(donor_pats)))
                steps.append(
                    Step(
                        target=pi.order[j - 1] - 1,
                        prefix=tuple(o - 1 for o in pi.order[: j - 1]),
                        donor_rows=rows,
                        label=f"(r={r}, j={j})",
                    )
                )
            if steps:
                plan[r] = steps
    return plan


def _normalized_weights(logw: np.ndarray, context: str) -> np.ndarray:
    """Row-normalize log weights in place; a row with no finite weight is
    an error, not a uniform fallback."""
    rowmax = logw.max(axis=1)
    if not np.all(np.isfinite(rowmax)):
        raise EstimationError(
            f"all donor weights underflowed to zero at {context}"
        )
    logw -= rowmax[:, None]
    w = np.exp(logw, out=logw)
    w /= w.sum(axis=1, keepdims=True)
    return w


def _log_weight_matrix(
    kernels: Sequence[KernelSpec],
    prefix: Sequence[int],
    queries: np.ndarray,
    donor_values: np.ndarray,
    drop_constants: bool = False,
) -> np.ndarray:
    """Sum of log kernel densities over the prefix for every
    (query, donor) pair.  ``drop_constants`` skips the Gaussian
    normalization constants, which cancel under weight normalization."""
    nq, ndon = queries.shape[0], donor_values.shape[0]
    acc = None  # accumulated squared scaled Gaussian distances
    const = 0.0
    logw = None
    for c, col in enumerate(prefix):
        spec = kernels[col]
        if spec.family == "gaussian":
            z = queries[:, c, None] - donor_values[None, :, c]
            z *= 1.0 / spec.bandwidth
            z *= z
            if acc is None:
                acc = z
            else:
                acc += z
            if not drop_constants:
                const -= math.log(spec.bandwidth) + 0.5 * math.log(2.0 * math.pi)
        else:
            term = kernel_logpdf_matrix(spec, queries[:, c], donor_values[:, c])
            logw = term if logw is None else logw + term
    if acc is not None:
        acc *= -0.5
        if const:
            acc += const
        logw = acc if logw is None else logw + acc
    if logw is None:
        logw = np.zeros((nq, ndon))
    return logw


def _draw_from_kernel(
    spec: KernelSpec, centers: np.ndarray, z: np.ndarray, u: np.ndarray
) -> np.ndarray:
    if spec.family == "gaussian":
        return centers + spec.bandwidth * z
    return kernel_sample_categorical(spec, centers, u)


def _impute_group(
    values: np.ndarray,
    kernels: Sequence[KernelSpec],
    pattern: str,
    steps: list[Step],
    cur: np.ndarray,  # (m, V, d), modified in place
    u_donor: np.ndarray,
    z_kern: np.ndarray,
    u_kern: np.ndarray,
) -> None:
    m, V, _ = cur.shape
    for si, step in enumerate(steps):
        donors = step.donor_rows
        if donors.size == 0:
            raise EstimationError(f"no donors in data for step {step.label}")
        nd = donors.size
        spec_t = kernels[step.target]
        u = u_donor[si]

        if not step.prefix:
            # empty conditioning prefix: uniform over the donor pool
            picks = np.minimum((u * nd).astype(np.int64), nd - 1)
        elif all(pattern[c] == "1" for c in step.prefix):
            # prefix fully observed: weights are shared across completions
            dvals = values[np.ix_(donors, step.prefix)]
            queries = cur[:, 0, step.prefix]
            logw = _log_weight_matrix(
                kernels, step.prefix, queries, dvals, drop_constants=True
            )
            w = _normalized_weights(logw, step.label)
            cumw = np.cumsum(w, axis=1)
            picks = np.empty((m, V), dtype=np.int64)
            for i in range(m):
                picks[i] = np.searchsorted(cumw[i], u[i], side="left")
            picks = np.minimum(picks, nd - 1)
        else:
            dvals = values[np.ix_(donors, step.prefix)]
            queries = cur[:, :, step.prefix].reshape(m * V, len(step.prefix))
            uu = u.reshape(m * V)
            picks_flat = np.empty(m * V, dtype=np.int64)
            chunk = max(1, _CHUNK_ELEMENTS // max(nd * len(step.prefix), 1))
            for lo in range(0, m * V, chunk):
                hi = min(lo + chunk, m * V)
                logw = _log_weight_matrix(
                    kernels, step.prefix, queries[lo:hi], dvals, drop_constants=True
                )
                w = _normalized_weights(logw, step.label)
                cumw = np.cumsum(w, axis=1)
                picks_flat[lo:hi] = np.minimum(
                    (cumw < uu[lo:hi, None]).sum(axis=1), nd - 1
                )
            picks = picks_flat.reshape(m, V)

        centers = values[donors[picks.reshape(-1)], step.target]
        drawn = _draw_from_kernel(
            spec_t, centers, z_kern[si].reshape(-1), u_kern[si].reshape(-1)
        )
        cur[:, :, step.target] = drawn.reshape(m, V)


def complete_sample(
    sample: ObservedSample,
    restriction: Restriction,
    V: int,
    kernels: Sequence[KernelSpec],
    seed,
) -> CompletedSample:
    """Draw V independent completions of every row.

    ``seed`` may be an int or a numpy SeedSequence.  Output is fully
    determined by (data, restriction, kernels, V, seed).
    """
    if V < 1:
        raise EstimationError("V must be >= 1")
    plan = build_plan(sample, restriction)
    rng = np.random.default_rng(seed)
    comp = np.repeat(sample.values[:, None, :], V, axis=1)
    pat_arr = np.asarray(sample.patterns, dtype=object)
    for r in sorted(plan):
        steps = plan[r]
        rows = np.flatnonzero(pat_arr == r)
        m, S = rows.size, len(steps)
        # pre-drawn in an order that depends only on the pattern structure
        u_donor = rng.random((S, m, V))
        z_kern = rng.standard_normal((S, m, V))
        u_kern = rng.random((S, m, V))
        cur = comp[rows]
        _impute_group(sample.values, kernels, r, steps, cur, u_donor, z_kern, u_kern)
        comp[rows] = cur
    return CompletedSample(base=sample, completions=comp, V=V)


def donor_weights(
    sample: ObservedSample,
    prefix_cols: Sequence[int],
    prefix_values: Sequence[float],
    donors: np.ndarray,
    kernels: Sequence[KernelSpec],
) -> np.ndarray:
    """Normalized weight of every row: zero off the donor pool, kernel
    product over the conditioning prefix on it."""
    donors = _donor_indices(donors, sample.n)
    if donors.size == 0:
        raise EstimationError("empty donor pool in data")
    prefix_cols = tuple(prefix_cols)
    if len(prefix_cols) != len(prefix_values):
        raise EstimationError("prefix columns and values length mismatch")
    for i in donors:
        for c in prefix_cols:
            if sample.patterns[i][c] != "1":
                raise EstimationError(
                    f"donor row {i} has column {c + 1} unobserved"
                )
    if prefix_cols:
        queries = np.asarray(prefix_values, dtype=float)[None, :]
        dvals = sample.values[np.ix_(donors, prefix_cols)]
        logw = _log_weight_matrix(kernels, prefix_cols, queries, dvals)
        w = _normalized_weights(
            logw, f"prefix columns {[c + 1 for c in prefix_cols]} = {list(prefix_values)}"
        )[0]
    else:
        w = np.full(donors.size, 1.0 / donors.size)
    out = np.zeros(sample.n)
    out[donors] = w
    return out


def conditional_cdf_1step(
    sample: ObservedSample,
    prefix_cols: Sequence[int],
    prefix_values: Sequence[float],
    target: int,
    donors: np.ndarray,
    kernels: Sequence[KernelSpec],
    x,
):
    """Exact one-step extrapolation CDF: the donor-weighted mixture of
    Gaussian kernel CDFs at the target coordinate."""
    spec = kernels[target]
    w = donor_weights(sample, prefix_cols, prefix_values, donors, kernels)
    donors = _donor_indices(donors, sample.n)
    centers = sample.values[donors, target]
    vals = kernel_cdf(spec, x, centers) @ w[donors]
    return float(vals[0]) if np.isscalar(x) else vals


def _donor_indices(donors, n: int) -> np.ndarray:
    donors = np.asarray(donors)
    if donors.dtype == bool:
        if donors.size != n:
            raise EstimationError("donor mask length mismatch")
        return np.flatnonzero(donors)
    return donors.astype(np.int64)


def donor_row_mask(sample: ObservedSample, donor_set) -> np.ndarray:
    """Rows of the sample whose pattern (or dropout time) lies in a donor set."""
    items = set(donor_set)
    if all(isinstance(a, str) for a in items):
        return np.asarray([r in items for r in sample.patterns])
    tmap = detect_monotone(sample.patterns)
    if tmap is None:
        raise EstimationError("dropout-time donor set on nonmonotone data")
    return np.asarray([tmap[r] in items for r in sample.patterns])


def mc_cdf(
    completed: CompletedSample,
    upper: Sequence[float],
    r: Optional[str] = None,
) -> float:
    """Monte Carlo joint CDF: fraction of completed points inside the box
    (-inf, upper], optionally restricted to one response pattern."""
    ub = np.asarray(upper, dtype=float)
    if ub.shape != (completed.base.d,):
        raise EstimationError(f"box must give {completed.base.d} upper bounds")
    inside = np.all(completed.completions <= ub, axis=2)  # (n, V)
    if r is not None:
        mask = np.asarray([p == r for p in completed.base.patterns])
        inside = inside[mask]
    n, V = completed.base.n, completed.V
    return float(inside.sum() / (n * V))


# --- functionals ------------------------------------------------------------

FunctionalLike = Union[FunctionalSpec, Callable[[np.ndarray, Optional[np.ndarray]], float]]


def _eval_on(values: np.ndarray, groups: Optional[np.ndarray], f: FunctionalLike,
             schema) -> float:
    if callable(f) and not isinstance(f, FunctionalSpec):
        return float(f(values, groups))
    j = schema.index_of(f.var)
    col = values[:, j]
    if f.kind == "mean":
        return float(col.mean())
    if f.kind == "variance":
        return float(col.var(ddof=0))
    if f.kind == "quantile":
        srt = np.sort(col)
        k = math.ceil(f.p * srt.size) - 1
        return float(srt[max(k, 0)])
    if f.kind == "correlation":
        other = values[:, schema.index_of(f.var2)]
        if col.var() == 0 or other.var() == 0:
            raise EstimationError(
                f"correlation undefined: zero variance in {f.var}/{f.var2}"
            )
        return float(np.corrcoef(col, other)[0, 1])
    if f.kind == "mean_difference":
        if groups is None:
            raise EstimationError("mean_difference needs a group column")
        ma = groups == f.group_a
        mb = groups == f.group_b
        if not ma.any() or not mb.any():
            raise EstimationError(
                f"empty group for mean_difference: {f.group_a!r} or {f.group_b!r}"
            )
        return float(col[ma].mean() - col[mb].mean())
    raise EstimationError(f"unknown functional kind {f.kind!r}")


def evaluate_functional(completed: CompletedSample, f: FunctionalLike) -> float:
    """Functional of the Monte Carlo distribution: the sample statistic on
    the pooled nV completed rows."""
    return _eval_on(completed.pooled(), completed.pooled_groups(), f,
                    completed.base.schema)


def evaluate_functional_averaged(completed: CompletedSample, f: FunctionalLike) -> float:
    """Average of the statistic over the V single-completion datasets."""
    groups = completed.base.groups
    vals = [
        _eval_on(completed.completions[:, v, :], groups, f, completed.base.schema)
        for v in range(completed.V)
    ]
    return float(np.mean(vals))


# --- density evaluation -----------------------------------------------------

def surrogate_density(
    sample: ObservedSample,
    x_r: Sequence[float],
    r: str,
    kernels: Sequence[KernelSpec],
) -> float:
    """Kernel density estimate of the observed-data density at (x_r, r)."""
    cols = [j for j, c in enumerate(r) if c == "1"]
    if len(x_r) != len(cols):
        raise EstimationError(
            f"x_r must give {len(cols)} values for the observed coordinates of {r}"
        )
    rows = np.flatnonzero(np.asarray([p == r for p in sample.patterns]))
    if rows.size == 0:
        return 0.0
    if not cols:
        return rows.size / sample.n
    queries = np.asarray(x_r, dtype=float)[None, :]
    logk = _log_weight_matrix(kernels, cols, queries, sample.values[np.ix_(rows, cols)])
    return float(np.exp(logk[0]).sum() / sample.n)


def full_density(
    sample: ObservedSample,
    x: Sequence[float],
    r: str,
    restriction: Restriction,
    kernels: Sequence[KernelSpec],
) -> float:
    """Estimated full-data density at (x, r): surrogate observed-data
    density times the extrapolation one-step mixture densities."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sample.d,):
        raise EstimationError(f"x must give all {sample.d} coordinates")
    x_r = [x[j] for j, c in enumerate(r) if c == "1"]
    dens = surrogate_density(sample, x_r, r, kernels)
    steps = build_plan(sample, restriction).get(r, [])
    for step in steps:
        w = donor_weights(sample, step.prefix, x[list(step.prefix)],
                          step.donor_rows, kernels)
        donors = step.donor_rows
        spec = kernels[step.target]
        k = np.exp(
            kernel_logpdf_matrix(spec, x[[step.target]], sample.values[donors, step.target])
        )[0]
        dens *= float(k @ w[donors])
    return dens
