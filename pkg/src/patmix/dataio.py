"""Dataset and configuration ingestion, schema handling, result output.

Data files are delimited text with a header row; the missing marker
(default "NA") turns a cell into a missing slot.  Configs and results use
JSON.  Numeric values are serialized with ``repr``, which preserves all
17 significant digits, so written results reload bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import InitVar, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .patterns import validate_pattern


class DataError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    vtype: str  # "continuous" | "categorical"
    levels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.vtype not in ("continuous", "categorical"):
            raise ConfigError(f"variable {self.name!r}: unknown type {self.vtype!r}")
        if self.vtype == "categorical" and not self.levels:
            raise ConfigError(f"variable {self.name!r}: categorical needs levels")


@dataclass(frozen=True)
class Schema:
    variables: tuple[Variable, ...]  # study variables, in column order
    group_column: Optional[str] = None
    id_column: Optional[str] = None

    def __post_init__(self):
        if not self.variables:
            raise ConfigError("schema needs at least one study variable")
        names = [v.name for v in self.variables] + [
            c for c in (self.group_column, self.id_column) if c is not None
        ]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate column names in schema: {names}")

    @property
    def d(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"unknown study variable {name!r}") from None


@dataclass
class ObservedSample:
    """The observed sample: an (n, d) value matrix with NaN in missing
    slots, per-row response patterns, and optional group/id columns.

    Categorical values are stored as float level codes (0-based index into
    the schema's level list).
    """

    values: np.ndarray
    patterns: list[str]
    schema: Schema
    groups: Optional[np.ndarray] = None  # (n,) object array
    ids: Optional[np.ndarray] = None
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool = True):
        self.values = np.asarray(self.values, dtype=float)
        n, d = self.values.shape
        if d != self.schema.d:
            raise DataError(f"value matrix has {d} columns, schema has {self.schema.d}")
        if len(self.patterns) != n:
            raise DataError("pattern list length does not match row count")
        if not validate:
            return
        for i, r in enumerate(self.patterns):
            validate_pattern(r, d=d)
            for j, c in enumerate(r):
                if (c == "1") != bool(np.isfinite(self.values[i, j])):
                    raise DataError(
                        f"row {i}: pattern {r} inconsistent with values at column {j + 1}"
                    )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def subset(self, idx: np.ndarray) -> "ObservedSample":
        # rows already validated; skip the per-row consistency pass
        return ObservedSample(
            values=self.values[idx],
            patterns=[self.patterns[i] for i in idx],
            schema=self.schema,
            groups=None if self.groups is None else self.groups[idx],
            ids=None if self.ids is None else self.ids[idx],
            validate=False,
        )


def derive_pattern(row: Sequence[float]) -> str:
    return "".join("1" if math.isfinite(v) else "0" for v in row)


def load_dataset(path, schema: Schema, missing_marker: str = "NA") -> ObservedSample:
    """Parse a delimited file into an ObservedSample."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    col_index = {name: i for i, name in enumerate(header)}
    needed = list(schema.names) + [
        c for c in (schema.group_column, schema.id_column) if c is not None
    ]
    for name in needed:
        if name not in col_index:
            raise DataError(f"{path}: column {name!r} missing from header {header}")

    n, d = len(rows), schema.d
    values = np.full((n, d), np.nan)
    for j, var in enumerate(schema.variables):
        ci = col_index[var.name]
        for i, row in enumerate(rows):
            cell = row[ci].strip()
            if cell == missing_marker:
                continue
            if var.vtype == "continuous":
                try:
                    values[i, j] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {i + 2}, column {var.name!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(values[i, j]):
                    raise DataError(
                        f"{path}: row {i + 2}, column {var.name!r}: non-finite value"
                    )
            else:
                try:
                    values[i, j] = var.levels.index(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {i + 2}, column {var.name!r}: "
                        f"unknown level {cell!r} (levels: {list(var.levels)})"
                    ) from None

    def full_column(name: str) -> np.ndarray:
        ci = col_index[name]
        out = np.empty(n, dtype=object)
        for i, row in enumerate(rows):
            cell = row[ci].strip()
            if cell == missing_marker:
                raise DataError(
                    f"{path}: row {i + 2}: missing value in column {name!r}, "
                    "which must be fully observed"
                )
            out[i] = cell
        return out

    groups = full_column(schema.group_column) if schema.group_column else None
    ids = full_column(schema.id_column) if schema.id_column else None
    patterns = [derive_pattern(values[i]) for i in range(n)]
    return ObservedSample(values=values, patterns=patterns, schema=schema,
                          groups=groups, ids=ids)


# --- run configuration ------------------------------------------------------

VALID_FUNCTIONALS = ("mean", "variance", "quantile", "correlation", "mean_difference")


@dataclass(frozen=True)
class FunctionalSpec:
    kind: str
    var: str
    var2: Optional[str] = None
    p: Optional[float] = None
    group_a: Optional[str] = None
    group_b: Optional[str] = None
    label: Optional[str] = None

    def describe(self) -> str:
        if self.label:
            return self.label
        if self.kind == "quantile":
            return f"quantile({self.var},{self.p})"
        if self.kind == "correlation":
            return f"correlation({self.var},{self.var2})"
        if self.kind == "mean_difference":
            return f"mean_difference({self.var},{self.group_a}-{self.group_b})"
        return f"{self.kind}({self.var})"


@dataclass(frozen=True)
class RunConfig:
    schema: Schema
    restrictions: tuple[dict, ...]  # raw restriction specs, one per analysis
    functionals: tuple[FunctionalSpec, ...]
    permutations: dict = field(default_factory=dict)  # pattern -> 1-based order
    bandwidths: dict = field(default_factory=lambda: {"auto": "silverman"})
    force_nonmonotone: bool = False
    V: int = 100
    B: int = 1000
    alpha: float = 0.05
    seed: int = 0
    missing_marker: str = "NA"

    def __post_init__(self):
        if self.V < 1:
            raise ConfigError("V must be >= 1")
        if self.B < 2:
            raise ConfigError("B must be >= 2")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be in (0, 1)")


def _parse_schema(obj: dict) -> Schema:
    if "variables" not in obj:
        raise ConfigError("config: schema.variables is required")
    variables = []
    for v in obj["variables"]:
        variables.append(
            Variable(
                name=v["name"],
                vtype=v.get("type", "continuous"),
                levels=tuple(v["levels"]) if "levels" in v else None,
            )
        )
    return Schema(
        variables=tuple(variables),
        group_column=obj.get("group_column"),
        id_column=obj.get("id_column"),
    )


def _parse_restriction_spec(spec) -> dict:
    """Normalize a restriction config entry into {kind, k, custom}."""
    if isinstance(spec, str):
        name = spec.upper()
        if name in ("CC", "AC", "NC"):
            return {"kind": name}
        if name.endswith("NC") and name[:-2].isdigit():
            return {"kind": "kNC", "k": int(name[:-2])}
        raise ConfigError(f"unknown restriction {spec!r}")
    if isinstance(spec, dict):
        if "kNC" in spec:
            k = spec["kNC"]
            if not isinstance(k, int) or k < 1:
                raise ConfigError(f"kNC requires integer k >= 1, got {k!r}")
            return {"kind": "kNC", "k": k}
        if "custom" in spec:
            return {"kind": "custom", "custom": dict(spec["custom"])}
    raise ConfigError(f"cannot parse restriction spec {spec!r}")


def _parse_functional(obj: dict) -> FunctionalSpec:
    if not isinstance(obj, dict) or len([k for k in obj if k in VALID_FUNCTIONALS]) != 1:
        raise ConfigError(
            f"functional spec {obj!r} must name exactly one of {VALID_FUNCTIONALS}"
        )
    label = obj.get("label")
    if "mean" in obj:
        return FunctionalSpec(kind="mean", var=obj["mean"], label=label)
    if "variance" in obj:
        return FunctionalSpec(kind="variance", var=obj["variance"], label=label)
    if "quantile" in obj:
        var, p = obj["quantile"]
        if not 0 < p < 1:
            raise ConfigError(f"quantile p must be in (0,1), got {p}")
        return FunctionalSpec(kind="quantile", var=var, p=float(p), label=label)
    if "correlation" in obj:
        v1, v2 = obj["correlation"]
        return FunctionalSpec(kind="correlation", var=v1, var2=v2, label=label)
    md = obj["mean_difference"]
    return FunctionalSpec(
        kind="mean_difference",
        var=md["var"],
        group_a=md["group_a"],
        group_b=md["group_b"],
        label=label,
    )


def parse_config(obj: dict) -> RunConfig:
    schema = _parse_schema(obj.get("schema", {}))
    raw = obj.get("restriction")
    if raw is None:
        raw = obj.get("restrictions")
    if raw is None:
        raise ConfigError("config: 'restriction' (or 'restrictions') is required")
    if not isinstance(raw, list):
        raw = [raw]
    restrictions = tuple(_parse_restriction_spec(s) for s in raw)

    functionals = tuple(_parse_functional(f) for f in obj.get("functionals", []))
    if not functionals:
        raise ConfigError("config: at least one functional is required")
    for f in functionals:
        schema.index_of(f.var)
        if f.var2 is not None:
            schema.index_of(f.var2)
        if f.kind == "mean_difference" and schema.group_column is None:
            raise ConfigError("mean_difference requires schema.group_column")

    permutations = {}
    for r, order in obj.get("permutations", {}).items():
        validate_pattern(r, d=schema.d)
        if sorted(order) != list(range(1, schema.d + 1)):
            raise ConfigError(
                f"permutation override for {r}: {order} is not a permutation of "
                f"1..{schema.d}"
            )
        permutations[r] = tuple(order)

    bandwidths = obj.get("bandwidths", {"auto": "silverman"})
    if not (
        isinstance(bandwidths, dict)
        and (bandwidths.get("auto") == "silverman" or "fixed" in bandwidths)
    ):
        raise ConfigError(
            'bandwidths must be {"auto": "silverman"} or {"fixed": [h1, ..., hd]}'
        )
    if "fixed" in bandwidths and len(bandwidths["fixed"]) != schema.d:
        raise ConfigError(f"bandwidths.fixed must list {schema.d} values")

    return RunConfig(
        schema=schema,
        restrictions=restrictions,
        functionals=functionals,
        permutations=permutations,
        bandwidths=bandwidths,
        force_nonmonotone=bool(obj.get("force_nonmonotone", False)),
        V=int(obj.get("V", 100)),
        B=int(obj.get("B", 1000)),
        alpha=float(obj.get("alpha", 0.05)),
        seed=int(obj.get("seed", 0)),
        missing_marker=obj.get("missing_marker", "NA"),
    )


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    return parse_config(obj)


# --- results ----------------------------------------------------------------

RESULT_COLUMNS = ("restriction", "functional", "estimate", "lower", "upper")


def write_results(results: list[dict], out_base) -> dict:
    """Write a JSON document and a flat CSV table.

    ``results`` is a list of records with at least the keys in
    RESULT_COLUMNS; extra keys (alpha, B, V, seed, replicates, ...) go to
    the JSON document only.  Returns the written paths.
    """
    out_base = str(out_base)
    json_path = out_base + ".json"
    csv_path = out_base + ".csv"
    with open(json_path, "w") as fh:
        json.dump({"results": results}, fh, indent=2, default=_jsonable)
        fh.write("\n")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for rec in results:
            writer.writerow(
                [
                    rec["restriction"],
                    rec["functional"],
                    _fmt(rec["estimate"]),
                    _fmt(rec.get("lower")),
                    _fmt(rec.get("upper")),
                ]
            )
    return {"json": json_path, "csv": csv_path}


def load_results(out_base) -> list[dict]:
    with open(str(out_base) + ".json") as fh:
        return json.load(fh)["results"]


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x)}")
