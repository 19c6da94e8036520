"""Response-pattern algebra: bit-string patterns, dropout times, the
observed-at-least-as-much partial order, per-pattern permutations, and
potential-donor sets.

Patterns are canonical bit strings like "0101": position j is '1' when
variable j is observed.  Permutation entries are 1-based, matching the
string form used in configs and result files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional


class PatternError(ValueError):
    pass


def validate_pattern(r: str, d: Optional[int] = None) -> str:
    if not isinstance(r, str) or len(r) == 0 or any(c not in "01" for c in r):
        raise PatternError(f"invalid response pattern {r!r}")
    if d is not None and len(r) != d:
        raise PatternError(f"pattern {r!r} has length {len(r)}, expected {d}")
    return r


def n_observed(r: str) -> int:
    """|r|: number of observed variables under pattern r."""
    return r.count("1")


def observed_indices(r: str) -> tuple[int, ...]:
    """1-based indices of the observed variables, ascending."""
    return tuple(j + 1 for j, c in enumerate(r) if c == "1")


def missing_indices(r: str) -> tuple[int, ...]:
    """1-based indices of the missing variables, ascending."""
    return tuple(j + 1 for j, c in enumerate(r) if c == "0")


def hamming_distance(r: str, rp: str) -> int:
    """Number of positions where the two patterns disagree."""
    validate_pattern(r)
    validate_pattern(rp, d=len(r))
    return sum(a != b for a, b in zip(r, rp))


def precedes(r: str, rp: str) -> bool:
    """True iff every variable observed under r is also observed under rp."""
    validate_pattern(r)
    validate_pattern(rp, d=len(r))
    return all(b == "1" for a, b in zip(r, rp) if a == "1")


@dataclass(frozen=True)
class Permutation:
    """A variable ordering used to factorize the extrapolation distribution.

    ``order`` is a permutation of (1, ..., d) whose first ``n_observed(
    base_pattern)`` entries are exactly the observed indices of
    ``base_pattern``.
    """

    order: tuple[int, ...]
    base_pattern: str

    def __post_init__(self):
        validate_pattern(self.base_pattern)
        d = len(self.base_pattern)
        if sorted(self.order) != list(range(1, d + 1)):
            raise PatternError(
                f"order {self.order} is not a permutation of 1..{d}"
            )
        t = n_observed(self.base_pattern)
        if set(self.order[:t]) != set(observed_indices(self.base_pattern)):
            raise PatternError(
                f"first {t} entries of {self.order} must be the observed "
                f"indices of {self.base_pattern}"
            )

    @property
    def d(self) -> int:
        return len(self.base_pattern)

    def prefix_pattern(self, j: int) -> str:
        """The pattern with ones exactly at the first j entries of the order."""
        if not 0 <= j <= self.d:
            raise PatternError(f"prefix length {j} out of range for d={self.d}")
        ones = set(self.order[:j])
        return "".join("1" if i + 1 in ones else "0" for i in range(self.d))


def default_permutation(r: str) -> Permutation:
    """Observed indices ascending, then missing indices ascending."""
    validate_pattern(r)
    return Permutation(order=observed_indices(r) + missing_indices(r), base_pattern=r)


def potential_donors(pi: Permutation, j: int) -> frozenset[str]:
    """All patterns under which the first j permuted variables are observed."""
    if not n_observed(pi.base_pattern) < j <= pi.d:
        raise PatternError(
            f"step index {j} out of range ({n_observed(pi.base_pattern)}, {pi.d}]"
        )
    base = pi.prefix_pattern(j)
    free = [i for i, c in enumerate(base) if c == "0"]
    out = []
    for mask in range(1 << len(free)):
        bits = list(base)
        for b, i in enumerate(free):
            if mask >> b & 1:
                bits[i] = "1"
        out.append("".join(bits))
    return frozenset(out)


def dropout_time(r: str) -> Optional[int]:
    """T = |r| when r is a prefix-of-ones pattern, else None."""
    validate_pattern(r)
    t = n_observed(r)
    return t if r == "1" * t + "0" * (len(r) - t) else None


def detect_monotone(patterns: Iterable[str]) -> Optional[dict[str, int]]:
    """Map each distinct pattern to its dropout time, or None if any
    observed pattern is not a prefix of ones."""
    out: dict[str, int] = {}
    for r in patterns:
        if r not in out:
            t = dropout_time(r)
            if t is None:
                return None
            out[r] = t
    return out
