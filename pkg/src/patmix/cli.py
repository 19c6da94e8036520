"""Command-line interface.

Subcommands: estimate | sensitivity | simulate | validate.
Exit codes: 0 success, 1 usage error, 2 data/config error, 3 estimation
failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .bootstrap import BandwidthPolicy, BootstrapError, run_bootstrap_multi
from .cc_oracle import cc_closed_form_mean
from .dataio import (
    ConfigError,
    DataError,
    RunConfig,
    load_config,
    load_dataset,
    write_results,
)
from .estimator import (
    EstimationError,
    complete_sample,
    evaluate_functional,
)
from .kernels import KernelError, bandwidth_vector
from .patterns import PatternError, detect_monotone
from .report import render_figure, summary_lines
from .restrictions import (
    RestrictionError,
    make_restriction,
    validate_restriction,
)
from .simulate import SimulationError, parse_sim_config, simulate_trial, write_simulation

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ESTIMATION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit_(EXIT_USAGE, f"{self.prog}: error: {message}")


class SystemExit_(Exception):
    def __init__(self, code, message=""):
        super().__init__(message)
        self.code = code
        self.message = message


def _build_parser() -> _Parser:
    parser = _Parser(prog="patmix", description=__doc__)
    parser.add_argument("--version", action="version", version=f"patmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--data", required=True, help="delimited data file")
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--threads", type=int, default=1, help="bootstrap workers")

    est = sub.add_parser("estimate", help="single-restriction estimation run")
    common(est)
    est.add_argument("--out", required=True, help="output base path (.json/.csv/.png)")
    est.add_argument("--no-figure", action="store_true", help="skip the figure")

    sens = sub.add_parser("sensitivity", help="one run per configured restriction")
    common(sens)
    sens.add_argument("--out", required=True)
    sens.add_argument("--no-figure", action="store_true")
    sens.add_argument(
        "--uncoupled",
        action="store_true",
        help="give each restriction its own seed substream instead of the "
        "shared master seed",
    )

    sim = sub.add_parser("simulate", help="generate a synthetic trial dataset")
    sim.add_argument("--config", required=True, help="JSON simulation config")
    sim.add_argument("--out", required=True, help="output base path")
    sim.add_argument("--seed", type=int, default=None)

    val = sub.add_parser("validate", help="donor-support and oracle diagnostics")
    val.add_argument("--data", required=True)
    val.add_argument("--config", required=True)
    val.add_argument("--seed", type=int, default=None)
    return parser


def _load_inputs(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = RunConfig(
            schema=config.schema,
            restrictions=config.restrictions,
            functionals=config.functionals,
            permutations=config.permutations,
            bandwidths=config.bandwidths,
            force_nonmonotone=config.force_nonmonotone,
            V=config.V,
            B=config.B,
            alpha=config.alpha,
            seed=args.seed,
            missing_marker=config.missing_marker,
        )
    sample = load_dataset(args.data, config.schema, config.missing_marker)
    return sample, config


def _policy(config: RunConfig) -> BandwidthPolicy:
    if "fixed" in config.bandwidths:
        return BandwidthPolicy(mode="fixed", fixed=tuple(config.bandwidths["fixed"]))
    return BandwidthPolicy(mode="silverman")


def _restriction_name(spec: dict) -> str:
    if spec["kind"] == "kNC":
        return f"{spec['k']}NC"
    return spec["kind"]


def _run_one_restriction(sample, config, spec, seed, n_jobs) -> list[dict]:
    restriction = make_restriction(
        spec,
        sample.patterns,
        sample.d,
        permutations=config.permutations,
        force_nonmonotone=config.force_nonmonotone,
    )
    report = validate_restriction(restriction, sample.d, sample.patterns)
    if not report.clean:
        failures = "; ".join(
            f"{e.pattern} {e.step} donors {e.donors}" for e in report.failures()
        )
        raise EstimationError(f"empty donor pools in data: {failures}")
    results = run_bootstrap_multi(
        sample,
        restriction,
        _policy(config),
        list(config.functionals),
        V=config.V,
        B=config.B,
        alpha=config.alpha,
        seed=seed,
        n_jobs=n_jobs,
    )
    return [
        res.to_record(_restriction_name(spec), f.describe())
        for res, f in zip(results, config.functionals)
    ]


def cmd_estimate(args) -> int:
    sample, config = _load_inputs(args)
    if len(config.restrictions) != 1:
        raise SystemExit_(
            EXIT_DATA, "estimate expects exactly one restriction; use sensitivity"
        )
    records = _run_one_restriction(
        sample, config, config.restrictions[0], config.seed, args.threads
    )
    _emit(records, args)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    sample, config = _load_inputs(args)
    if args.uncoupled:
        children = np.random.SeedSequence(config.seed).spawn(len(config.restrictions))
        seeds = [int(c.generate_state(1)[0]) for c in children]
    else:
        seeds = [config.seed] * len(config.restrictions)
    records = []
    any_ok = False
    for spec, seed in zip(config.restrictions, seeds):
        name = _restriction_name(spec)
        try:
            records.extend(
                _run_one_restriction(sample, config, spec, seed, args.threads)
            )
            any_ok = True
        except (EstimationError, BootstrapError, RestrictionError, KernelError) as exc:
            for f in config.functionals:
                records.append(
                    {
                        "restriction": name,
                        "functional": f.describe(),
                        "estimate": None,
                        "lower": None,
                        "upper": None,
                        "failed": True,
                        "error": str(exc),
                    }
                )
    _emit(records, args)
    return EXIT_OK if any_ok else EXIT_ESTIMATION


def _emit(records, args) -> None:
    ok_records = [
        {k: v for k, v in rec.items()} for rec in records if not rec.get("failed")
    ]
    paths = write_results(records, args.out)
    if not args.no_figure and ok_records:
        render_figure(records, args.out + ".png")
    for line in summary_lines(records):
        print(line)
    print(f"results written to {paths['json']} and {paths['csv']}")


def cmd_simulate(args) -> int:
    with open(args.config) as fh:
        obj = json.load(fh)
    if args.seed is not None:
        obj["seed"] = args.seed
    cfg = parse_sim_config(obj)
    result = simulate_trial(cfg)
    paths = write_simulation(result, args.out)
    n = result.full_values.shape[0]
    n_complete = sum(
        1 for row in result.masked_values if np.all(np.isfinite(row))
    )
    print(f"simulated {n} rows ({n_complete} complete) across {len(cfg.arms)} arms")
    for key, path in paths.items():
        print(f"{key}: {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    sample, config = _load_inputs(args)
    spec = config.restrictions[0]
    restriction = make_restriction(
        spec,
        sample.patterns,
        sample.d,
        permutations=config.permutations,
        force_nonmonotone=config.force_nonmonotone,
    )
    print(f"restriction: {_restriction_name(spec)}")
    tmap = detect_monotone(sample.patterns)
    if tmap is not None:
        counts = {}
        for r in sample.patterns:
            counts[tmap[r]] = counts.get(tmap[r], 0) + 1
        print("monotone missingness detected; dropout-time distribution:")
        for t in sorted(counts):
            print(f"  T={t}: {counts[t]} rows")
    else:
        print("nonmonotone missingness detected")
    report = validate_restriction(restriction, sample.d, sample.patterns)
    for line in report.lines():
        print("  " + line)
    print("donor support: " + ("clean" if report.clean else "EMPTY DONOR SETS FOUND"))

    all_continuous = all(v.vtype == "continuous" for v in sample.schema.variables)
    if sample.d == 2 and spec["kind"] == "CC" and all_continuous:
        kernels = bandwidth_vector(sample.values, sample.schema, config.bandwidths)
        oracle = cc_closed_form_mean(sample, kernels)
        completed = complete_sample(sample, restriction, config.V, kernels, config.seed)
        mc = evaluate_functional(completed, _mean_of_second())
        print(f"closed-form CC mean of {sample.schema.names[1]}: {oracle:.6g}")
        print(f"Monte Carlo CC mean (V={config.V}):          {mc:.6g}")
        print(f"gap: {mc - oracle:+.6g}")
    return EXIT_OK


def _mean_of_second():
    def stat(values, groups):
        return float(values[:, 1].mean())

    return stat


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit_ as exc:
        print(exc.message, file=sys.stderr)
        return exc.code
    handlers = {
        "estimate": cmd_estimate,
        "sensitivity": cmd_sensitivity,
        "simulate": cmd_simulate,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except SystemExit_ as exc:
        print(exc.message, file=sys.stderr)
        return exc.code
    except (ConfigError, DataError, PatternError, SimulationError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"patmix: data/config error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EstimationError, BootstrapError, RestrictionError, KernelError) as exc:
        print(f"patmix: estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    raise SystemExit(main())
