"""Shared dataset builders for the test suite."""

import numpy as np

from patmix.dataio import ObservedSample, Schema, Variable, derive_pattern


def continuous_schema(d, group_column=None):
    return Schema(
        variables=tuple(Variable(f"X{j + 1}", "continuous") for j in range(d)),
        group_column=group_column,
    )


def sample_from_values(values, schema=None, groups=None):
    values = np.asarray(values, dtype=float)
    if schema is None:
        schema = continuous_schema(values.shape[1])
    return ObservedSample(
        values=values,
        patterns=[derive_pattern(row) for row in values],
        schema=schema,
        groups=groups,
    )


def monotone_sample(n, d, seed, t_probs=None):
    """Correlated Gaussian trajectories with random dropout times.

    ``t_probs`` gives the dropout-time distribution over {1, ..., d};
    the default keeps complete cases the most common pattern.
    """
    rng = np.random.default_rng(seed)
    x = np.empty((n, d))
    x[:, 0] = rng.normal(0.0, 1.0, n)
    for j in range(1, d):
        x[:, j] = 0.3 * j + 0.6 * x[:, j - 1] + 0.8 * rng.normal(0.0, 1.0, n)
    if t_probs is None:
        t_probs = np.full(d, 0.5 / (d - 1)) if d > 1 else np.array([1.0])
        t_probs[-1] = 0.5
    T = rng.choice(np.arange(1, d + 1), size=n, p=np.asarray(t_probs))
    for i in range(n):
        x[i, T[i]:] = np.nan
    return sample_from_values(x)


def nonmonotone_sample(n, d, seed, pattern_probs):
    """Gaussian data masked by an outcome-independent pattern table."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, (n, d)) + 0.5 * rng.normal(0.0, 1.0, (n, 1))
    pats = sorted(pattern_probs)
    probs = np.asarray([pattern_probs[r] for r in pats], dtype=float)
    probs /= probs.sum()
    choice = rng.choice(len(pats), size=n, p=probs)
    for i, c in enumerate(choice):
        for j, bit in enumerate(pats[c]):
            if bit == "0":
                x[i, j] = np.nan
    return sample_from_values(x)
