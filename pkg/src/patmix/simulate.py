"""Synthetic longitudinal-trial generator for validation studies.

Generates per-arm outcome trajectories (AR(1) noise around specified
means, so marginal means and sds are known exactly), then masks them with
either a monotone dropout hazard that is logistic in the last observed
value (a missing-at-random mechanism, under which the all-available-cases
restriction is correct) or an outcome-independent pattern-probability
table for nonmonotone missingness.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .dataio import ObservedSample, Schema, Variable, derive_pattern
from .patterns import validate_pattern


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class Arm:
    name: str
    means: tuple[float, ...]


@dataclass(frozen=True)
class SimulationConfig:
    arms: tuple[Arm, ...]
    n_per_arm: int
    noise_sd: float
    ar: float
    dropout: dict
    seed: int

    @property
    def d(self) -> int:
        return len(self.arms[0].means)


def parse_sim_config(obj: dict) -> SimulationConfig:
    try:
        arms = tuple(Arm(a["name"], tuple(float(m) for m in a["means"])) for a in obj["arms"])
        cfg = SimulationConfig(
            arms=arms,
            n_per_arm=int(obj["n_per_arm"]),
            noise_sd=float(obj.get("noise_sd", 1.0)),
            ar=float(obj.get("ar", 0.0)),
            dropout=dict(obj.get("dropout", {"type": "none"})),
            seed=int(obj.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SimulationError(f"invalid simulation config: {exc}") from None
    if not arms or len({len(a.means) for a in arms}) != 1:
        raise SimulationError("all arms need mean trajectories of equal length")
    if cfg.n_per_arm < 1 or cfg.noise_sd <= 0 or not -1 < cfg.ar < 1:
        raise SimulationError("need n_per_arm >= 1, noise_sd > 0, |ar| < 1")
    _validate_dropout(cfg.dropout, cfg.d, {a.name for a in arms})
    return cfg


def _validate_dropout(spec: dict, d: int, arm_names: set[str]) -> None:
    kind = spec.get("type")
    if kind == "none":
        return
    if kind == "monotone_logistic":
        if "intercept" not in spec or "slope" not in spec:
            raise SimulationError("monotone_logistic dropout needs intercept and slope")
        for name in spec.get("arm_intercepts", {}):
            if name not in arm_names:
                raise SimulationError(f"arm_intercepts names unknown arm {name!r}")
        return
    if kind == "pattern_table":
        probs = spec.get("probs")
        if not probs:
            raise SimulationError("pattern_table dropout needs a probs table")
        for r in probs:
            validate_pattern(r, d=d)
        total = sum(probs.values())
        if any(p < 0 for p in probs.values()) or not math.isclose(total, 1.0, abs_tol=1e-9):
            raise SimulationError(f"pattern probabilities must be >= 0 and sum to 1, got {total}")
        return
    raise SimulationError(f"unknown dropout type {kind!r}")


@dataclass
class SimulationResult:
    full_values: np.ndarray  # (N, d)
    masked_values: np.ndarray  # (N, d) with NaN
    arms: np.ndarray  # (N,) object
    config: SimulationConfig

    def truth(self) -> dict:
        out = {"arm_means": {a.name: list(a.means) for a in self.config.arms},
               "noise_sd": self.config.noise_sd}
        ates = {}
        arms = self.config.arms
        for i in range(len(arms)):
            for j in range(len(arms)):
                if i != j:
                    ates[f"{arms[i].name}-{arms[j].name}"] = [
                        a - b for a, b in zip(arms[i].means, arms[j].means)
                    ]
        out["ates"] = ates
        return out

    def schema(self) -> Schema:
        d = self.config.d
        return Schema(
            variables=tuple(Variable(name=f"X{j + 1}", vtype="continuous") for j in range(d)),
            group_column="arm",
        )

    def observed_sample(self) -> ObservedSample:
        return ObservedSample(
            values=self.masked_values,
            patterns=[derive_pattern(row) for row in self.masked_values],
            schema=self.schema(),
            groups=self.arms,
        )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def simulate_trial(cfg: SimulationConfig) -> SimulationResult:
    rng = np.random.default_rng(cfg.seed)
    d = cfg.d
    blocks, arm_labels = [], []
    for arm in cfg.arms:
        mu = np.asarray(arm.means)
        x = np.empty((cfg.n_per_arm, d))
        e = rng.standard_normal((cfg.n_per_arm, d))
        x[:, 0] = mu[0] + cfg.noise_sd * e[:, 0]
        scale = cfg.noise_sd * math.sqrt(1.0 - cfg.ar**2)
        for j in range(1, d):
            x[:, j] = mu[j] + cfg.ar * (x[:, j - 1] - mu[j - 1]) + scale * e[:, j]
        blocks.append(x)
        arm_labels.extend([arm.name] * cfg.n_per_arm)
    full = np.vstack(blocks)
    arms = np.asarray(arm_labels, dtype=object)

    masked = full.copy()
    spec = cfg.dropout
    if spec["type"] == "monotone_logistic":
        base = float(spec["intercept"])
        slope = float(spec["slope"])
        arm_icpt = {k: float(v) for k, v in spec.get("arm_intercepts", {}).items()}
        icpt = np.asarray([arm_icpt.get(a, base) for a in arms])
        u = rng.random((full.shape[0], d))
        alive = np.ones(full.shape[0], dtype=bool)
        for s in range(1, d):  # chance to drop before observing X_{s+1}
            p = _sigmoid(icpt + slope * full[:, s - 1])
            drop = alive & (u[:, s] < p)
            masked[drop, s:] = np.nan
            alive &= ~drop
    elif spec["type"] == "pattern_table":
        pats = sorted(spec["probs"])
        probs = np.asarray([spec["probs"][r] for r in pats])
        probs = probs / probs.sum()
        choice = rng.choice(len(pats), size=full.shape[0], p=probs)
        for i, c in enumerate(choice):
            for j, bit in enumerate(pats[c]):
                if bit == "0":
                    masked[i, j] = np.nan
    return SimulationResult(full_values=full, masked_values=masked, arms=arms, config=cfg)


def write_simulation(result: SimulationResult, out_base, missing_marker: str = "NA") -> dict:
    """Write full.csv, masked.csv, and truth.json next to ``out_base``."""
    out_base = str(out_base)
    d = result.config.d
    header = ["arm"] + [f"X{j + 1}" for j in range(d)]
    paths = {
        "full": out_base + ".full.csv",
        "masked": out_base + ".masked.csv",
        "truth": out_base + ".truth.json",
    }
    for key, values in (("full", result.full_values), ("masked", result.masked_values)):
        with open(paths[key], "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for arm, row in zip(result.arms, values):
                writer.writerow(
                    [arm] + [missing_marker if not math.isfinite(v) else repr(float(v)) for v in row]
                )
    with open(paths["truth"], "w") as fh:
        json.dump(result.truth(), fh, indent=2)
        fh.write("\n")
    return paths
