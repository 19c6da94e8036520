"""Donor-based identifying restrictions.

A restriction maps each extrapolation step to a set of donors: dropout
times for monotone missingness, response patterns otherwise.  Built-ins
are CC (complete cases), AC (all available cases), NC (nearest case) and
kNC (cases within Hamming radius k); custom donor maps can be supplied
in the run config.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .patterns import (
    Permutation,
    default_permutation,
    detect_monotone,
    hamming_distance,
    n_observed,
    potential_donors,
    validate_pattern,
)

NAMED_KINDS = ("CC", "AC", "NC", "kNC")


class RestrictionError(ValueError):
    pass


def _check_kind(kind: str, k: Optional[int], custom) -> None:
    if kind not in NAMED_KINDS and kind != "custom":
        raise RestrictionError(f"unknown restriction kind {kind!r}")
    if kind == "kNC" and (k is None or k < 1):
        raise RestrictionError("kNC requires k >= 1")
    if kind == "custom" and not custom:
        raise RestrictionError("custom restriction requires a donor map")


@dataclass(frozen=True)
class MonotoneRestriction:
    """Donor times A_ts for monotone missingness.

    ``custom`` maps (t, s) to a set of dropout times in {s, ..., d}.
    """

    kind: str
    k: Optional[int] = None
    custom: Optional[Mapping[tuple[int, int], frozenset[int]]] = None

    def __post_init__(self):
        _check_kind(self.kind, self.k, self.custom)

    @property
    def name(self) -> str:
        return f"{self.k}NC" if self.kind == "kNC" else self.kind


@dataclass(frozen=True)
class NonmonotoneRestriction:
    """Donor patterns A(r, pi_<=j) for general missingness.

    ``custom`` maps (pattern, j) to a set of donor patterns.
    ``permutations`` overrides the per-pattern variable ordering; patterns
    without an entry use the default (observed ascending, then missing
    ascending).
    """

    kind: str
    k: Optional[int] = None
    custom: Optional[Mapping[tuple[str, int], frozenset[str]]] = None
    permutations: Mapping[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        _check_kind(self.kind, self.k, self.custom)

    @property
    def name(self) -> str:
        return f"{self.k}NC" if self.kind == "kNC" else self.kind

    def permutation_for(self, r: str) -> Permutation:
        override = self.permutations.get(r)
        if override is None:
            return default_permutation(r)
        return Permutation(order=tuple(override), base_pattern=r)


def monotone_donor_times(
    restriction: MonotoneRestriction, t: int, s: int, d: int
) -> frozenset[int]:
    """The donor time set A_ts for imputing X_s given dropout at t."""
    if not 0 <= t < s <= d:
        raise RestrictionError(f"need 0 <= t < s <= d, got t={t}, s={s}, d={d}")
    if restriction.kind == "CC":
        return frozenset({d})
    if restriction.kind == "AC":
        return frozenset(range(s, d + 1))
    if restriction.kind == "NC":
        return frozenset({s})
    if restriction.kind == "kNC":
        return frozenset(range(s, min(s + restriction.k, d) + 1))
    entry = restriction.custom.get((t, s))
    if entry is None:
        raise RestrictionError(f"custom donor map has no entry for (t={t}, s={s})")
    times = frozenset(entry)
    if not times or not times <= frozenset(range(s, d + 1)):
        raise RestrictionError(
            f"custom donor times {sorted(times)} for (t={t}, s={s}) must be a "
            f"nonempty subset of {{{s},...,{d}}}"
        )
    return times


def nonmonotone_donor_patterns(
    restriction: NonmonotoneRestriction, r: str, j: int
) -> frozenset[str]:
    """The donor pattern set A(r, pi_<=j) for the j-th extrapolation step."""
    validate_pattern(r)
    pi = restriction.permutation_for(r)
    pool = potential_donors(pi, j)
    if restriction.kind == "CC":
        return frozenset({"1" * len(r)})
    if restriction.kind == "AC":
        return pool
    target = pi.prefix_pattern(j)
    if restriction.kind == "NC":
        return frozenset({target})
    if restriction.kind == "kNC":
        return frozenset(
            rp for rp in pool if hamming_distance(target, rp) <= restriction.k
        )
    entry = restriction.custom.get((r, j))
    if entry is None:
        raise RestrictionError(f"custom donor map has no entry for (r={r}, j={j})")
    pats = frozenset(entry)
    if not pats or not pats <= pool:
        raise RestrictionError(
            f"custom donor patterns {sorted(pats)} for (r={r}, j={j}) must be a "
            f"nonempty subset of the potential donors {sorted(pool)}"
        )
    return pats


@dataclass(frozen=True)
class ValidationEntry:
    pattern: str
    step: str  # human-readable "(t=?, s=?)" or "(r=?, j=?)"
    donors: str  # rendering of the donor set
    n_donor_rows: int

    @property
    def ok(self) -> bool:
        return self.n_donor_rows > 0


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple[ValidationEntry, ...]

    @property
    def clean(self) -> bool:
        return all(e.ok for e in self.entries)

    def failures(self) -> list[ValidationEntry]:
        return [e for e in self.entries if not e.ok]

    def lines(self) -> list[str]:
        out = []
        for e in self.entries:
            status = "ok" if e.ok else "EMPTY"
            out.append(
                f"pattern {e.pattern} step {e.step}: donors {e.donors} -> "
                f"{e.n_donor_rows} rows [{status}]"
            )
        return out


def validate_restriction(restriction, d: int, patterns) -> ValidationReport:
    """Check every donor set reachable from the observed patterns for
    support in the data.  Report-only; callers refuse to estimate when any
    reachable donor set is empty in data."""
    counts = Counter(patterns)
    for r in counts:
        validate_pattern(r, d=d)
    entries: list[ValidationEntry] = []
    if isinstance(restriction, MonotoneRestriction):
        times = Counter(n_observed(r) for r in counts.elements())
        for t in sorted({n_observed(r) for r in counts}):
            for s in range(t + 1, d + 1):
                donors = monotone_donor_times(restriction, t, s, d)
                n_rows = sum(times[a] for a in donors)
                entries.append(
                    ValidationEntry(
                        pattern="1" * t + "0" * (d - t),
                        step=f"(t={t}, s={s})",
                        donors="{" + ",".join(str(a) for a in sorted(donors)) + "}",
                        n_donor_rows=n_rows,
                    )
                )
    else:
        for r in sorted(counts):
            for j in range(n_observed(r) + 1, d + 1):
                donors = nonmonotone_donor_patterns(restriction, r, j)
                n_rows = sum(counts[rp] for rp in donors)
                entries.append(
                    ValidationEntry(
                        pattern=r,
                        step=f"(r={r}, j={j})",
                        donors="{" + ",".join(sorted(donors)) + "}",
                        n_donor_rows=n_rows,
                    )
                )
    return ValidationReport(entries=tuple(entries))


def make_restriction(
    spec: Mapping,
    patterns,
    d: int,
    permutations: Optional[Mapping[str, tuple[int, ...]]] = None,
    force_nonmonotone: bool = False,
):
    """Build the restriction object matching a parsed config spec.

    The monotone machinery is auto-selected when every observed pattern is
    a prefix of ones, unless ``force_nonmonotone`` routes the run through
    the general engine.
    """
    monotone = detect_monotone(patterns) is not None and not force_nonmonotone
    kind = spec["kind"]
    k = spec.get("k")
    custom = spec.get("custom")
    if monotone:
        cm = None
        if custom is not None:
            cm = {}
            for key, times in custom.items():
                try:
                    t_str, s_str = key.split(",")
                    cm[(int(t_str), int(s_str))] = frozenset(int(a) for a in times)
                except ValueError:
                    raise RestrictionError(
                        f"custom donor map key {key!r} must look like 't,s'"
                    ) from None
        return MonotoneRestriction(kind=kind, k=k, custom=cm)
    cm = None
    if custom is not None:
        cm = {}
        for key, pats in custom.items():
            try:
                r, j_str = key.split(",")
                validate_pattern(r, d=d)
                cm[(r, int(j_str))] = frozenset(pats)
            except ValueError:
                raise RestrictionError(
                    f"custom donor map key {key!r} must look like 'r,j'"
                ) from None
    return NonmonotoneRestriction(
        kind=kind, k=k, custom=cm, permutations=dict(permutations or {})
    )
